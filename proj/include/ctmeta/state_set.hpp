#ifndef CTMETA_STATE_SET_HPP
#define CTMETA_STATE_SET_HPP

#include <algorithm>
#include <initializer_list>
#include <vector>

namespace ctmeta {

/// Sorted, duplicate-free set of state indices.
class StateSet {
public:
    StateSet() = default;
    StateSet(std::initializer_list<int> init) : items_(init) { normalize(); }
    explicit StateSet(std::vector<int> items) : items_(std::move(items)) { normalize(); }

    bool contains(int s) const {
        return std::binary_search(items_.begin(), items_.end(), s);
    }
    bool empty() const { return items_.empty(); }
    std::size_t size() const { return items_.size(); }
    const std::vector<int>& items() const { return items_; }

    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

    void insert(int s) {
        auto it = std::lower_bound(items_.begin(), items_.end(), s);
        if (it == items_.end() || *it != s) items_.insert(it, s);
    }

    bool intersects(const StateSet& other) const {
        auto a = items_.begin();
        auto b = other.items_.begin();
        while (a != items_.end() && b != other.items_.end()) {
            if (*a == *b) return true;
            if (*a < *b) ++a; else ++b;
        }
        return false;
    }

    bool subset_of(const StateSet& other) const {
        return std::includes(other.items_.begin(), other.items_.end(),
                             items_.begin(), items_.end());
    }

    StateSet unioned(const StateSet& other) const {
        std::vector<int> out;
        out.reserve(items_.size() + other.items_.size());
        std::set_union(items_.begin(), items_.end(), other.items_.begin(),
                       other.items_.end(), std::back_inserter(out));
        return StateSet(std::move(out));
    }

    StateSet minus(const StateSet& other) const {
        std::vector<int> out;
        std::set_difference(items_.begin(), items_.end(), other.items_.begin(),
                            other.items_.end(), std::back_inserter(out));
        return StateSet(std::move(out));
    }

    /// All indices in [0, n) not in this set.
    StateSet complement(int n) const {
        std::vector<int> out;
        out.reserve(static_cast<std::size_t>(n) - items_.size());
        auto it = items_.begin();
        for (int s = 0; s < n; ++s) {
            if (it != items_.end() && *it == s) { ++it; continue; }
            out.push_back(s);
        }
        return StateSet(std::move(out));
    }

    friend bool operator==(const StateSet&, const StateSet&) = default;

private:
    void normalize() {
        std::sort(items_.begin(), items_.end());
        items_.erase(std::unique(items_.begin(), items_.end()), items_.end());
    }

    std::vector<int> items_;
};

} // namespace ctmeta

#endif
