#include "vibeharvest/sweep.hpp"

#include "vibeharvest/errors.hpp"

namespace vibeharvest {

SweepResult::SweepResult(std::string independent_name, std::string independent_unit,
                         std::vector<SweepColumn> columns)
    : independent_name_(std::move(independent_name)),
      independent_unit_(std::move(independent_unit)),
      columns_(std::move(columns)) {}

void SweepResult::add_row(double value, std::vector<double> metrics) {
    if (metrics.size() != columns_.size()) {
        throw InvalidSweep("row has " + std::to_string(metrics.size()) + " metrics, expected " +
                           std::to_string(columns_.size()));
    }
    if (!rows_.empty() && value < rows_.back().value) {
        throw InvalidSweep("sweep rows must be ordered by the independent variable");
    }
    rows_.push_back({value, std::move(metrics)});
}

std::vector<double> SweepResult::independent() const {
    std::vector<double> out;
    out.reserve(rows_.size());
    for (const auto& row : rows_) out.push_back(row.value);
    return out;
}

std::size_t SweepResult::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        if (columns_[i].name == name) return i;
    }
    throw InvalidSweep("no column named '" + name + "'");
}

std::vector<double> SweepResult::column(const std::string& name) const {
    const auto index = column_index(name);
    std::vector<double> out;
    out.reserve(rows_.size());
    for (const auto& row : rows_) out.push_back(row.metrics[index]);
    return out;
}

}  // namespace vibeharvest
