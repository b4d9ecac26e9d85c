#pragma once

#include <compare>
#include <string>

namespace ecglink {

// A known class index in [0, C) or the Unknown marker.
class Label {
public:
    constexpr Label() = default;
    constexpr explicit Label(int index) : value_(index < 0 ? -1 : index) {}

    static constexpr Label unknown() { return Label(); }

    constexpr bool is_unknown() const { return value_ < 0; }
    constexpr bool is_known() const { return value_ >= 0; }
    // Raw value; -1 for Unknown.
    constexpr int value() const { return value_; }
    int index() const;

    friend constexpr auto operator<=>(Label, Label) = default;

    std::string to_string() const;

private:
    int value_ = -1;
};

}  // namespace ecglink
