// Framework files, JSON conversions and small CSV/SVG writers.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tensegrity/framework.hpp"

namespace tensegrity {

using Json = nlohmann::json;

class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct FrameworkFile {
  std::string name;
  ElasticFramework framework;
  ParameterPartition partition;
  std::optional<ControlSlice> slice;
  std::string source_hash;  // FNV-1a of the raw text, hex
};

FrameworkFile parse_framework(const Json& j);
FrameworkFile load_framework_file(const std::string& path);
Json framework_to_json(const FrameworkFile& f);

std::string fnv1a_hex(std::string_view bytes);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

Json to_json(const RVector& v);
Json to_json(const CVector& v);  // [[re, im], ...]
RVector rvector_from_json(const Json& j);
CVector cvector_from_json(const Json& j);

/// Shortest decimal that round-trips, so CSV output is byte-stable.
std::string format_double(double v);

struct SvgPoint {
  double x = 0.0;
  double y = 0.0;
  bool filled = true;
};

/// Heatmap of an integer field on a regular grid; negative values are holes.
std::string svg_heatmap(const std::vector<std::vector<int>>& field, double x0, double x1, double y0, double y1,
                        const std::string& title);
std::string svg_scatter(const std::vector<SvgPoint>& points, double x0, double x1, double y0, double y1,
                        const std::string& title);

}  // namespace tensegrity
