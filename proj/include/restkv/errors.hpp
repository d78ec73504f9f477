#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace restkv {

// Dimension mismatches, out-of-range indices, non-finite inputs.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// A budget too small to hold the positions a policy must keep.
class BudgetError : public std::invalid_argument {
public:
    BudgetError(const std::string& what, std::size_t minimum_budget)
        : std::invalid_argument(what + " (minimum feasible budget: " +
                                std::to_string(minimum_budget) + ")"),
          minimum_budget_(minimum_budget) {}

    std::size_t minimum_budget() const noexcept { return minimum_budget_; }

private:
    std::size_t minimum_budget_;
};

// Malformed trace or report file. offset is the byte where parsing failed.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " at byte offset " + std::to_string(offset)),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

}  // namespace restkv
