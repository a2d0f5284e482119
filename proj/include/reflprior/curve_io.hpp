#pragma once

#include <iosfwd>
#include <string>

#include "reflprior/physics.hpp"

namespace reflprior {

// Two-column text: q [1/A] and reflectivity, separated by whitespace or a comma.
// Lines starting with '#' are comments. Rows are sorted by q on read.
ReflectivityCurve read_curve(std::istream& in, const std::string& source = "<stream>");
ReflectivityCurve read_curve_file(const std::string& path);

void write_curve(std::ostream& out, const ReflectivityCurve& curve,
                 const std::string& header = "q [1/A]  R");
void write_curve_file(const std::string& path, const ReflectivityCurve& curve,
                      const std::string& header = "q [1/A]  R");

// Same layout for (z, rho) profiles.
void write_columns_file(const std::string& path, const Eigen::ArrayXd& x, const Eigen::ArrayXd& y,
                        const std::string& header);

// Write to a temporary sibling and rename into place.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace reflprior
