#pragma once

#include <string>
#include <vector>

namespace vibeharvest {

struct SweepColumn {
    std::string name;
    std::string unit;
};

struct SweepRow {
    double value = 0.0;
    std::vector<double> metrics;  // aligned with SweepResult::columns
};

/// Tabular result of a sweep: one independent variable and named metric
/// columns with units. Rows are kept in nondecreasing independent order.
class SweepResult {
public:
    SweepResult() = default;
    SweepResult(std::string independent_name, std::string independent_unit,
                std::vector<SweepColumn> columns);

    const std::string& independent_name() const { return independent_name_; }
    const std::string& independent_unit() const { return independent_unit_; }
    const std::vector<SweepColumn>& columns() const { return columns_; }
    const std::vector<SweepRow>& rows() const { return rows_; }
    std::size_t size() const { return rows_.size(); }
    bool empty() const { return rows_.empty(); }

    /// Appends a row; throws InvalidSweep on width mismatch or out-of-order value.
    void add_row(double value, std::vector<double> metrics);

    std::vector<double> independent() const;
    /// Values of the named column; throws InvalidSweep when absent.
    std::vector<double> column(const std::string& name) const;
    std::size_t column_index(const std::string& name) const;

private:
    std::string independent_name_;
    std::string independent_unit_;
    std::vector<SweepColumn> columns_;
    std::vector<SweepRow> rows_;
};

}  // namespace vibeharvest
