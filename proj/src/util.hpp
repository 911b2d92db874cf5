#ifndef ATTRLAB_SRC_UTIL_HPP
#define ATTRLAB_SRC_UTIL_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace attrlab {

std::vector<std::string> split(const std::string& s, char sep);
std::string trim(const std::string& s);
std::string lower(const std::string& s);
bool parse_double(const std::string& s, double& out);
bool parse_long(const std::string& s, long& out);

std::string read_file(const std::string& path);
/// Write via temp file + rename so readers never observe partial content.
void write_file_atomic(const std::string& path, const std::string& content);

std::uint64_t fnv1a(const std::string& s);
std::string hex64(std::uint64_t v);

double mean_of(const std::vector<double>& v);
double sample_variance(const std::vector<double>& v);
/// Linear-interpolation quantile on a copy of v (R type 7).
double quantile_of(std::vector<double> v, double q);

double normal_quantile(double p);
double student_t_quantile(double p, double df);

}  // namespace attrlab

#endif
