#include "tensegrity/io.hpp"

#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace tensegrity {

namespace {

ScalarSpec parse_spec(const Json& j, const std::string& what) {
  if (j.is_number()) return ScalarSpec::fixed(j.get<double>());
  if (j.is_object() && j.contains("param") && j["param"].is_string())
    return ScalarSpec::named(j["param"].get<std::string>());
  throw InputError(what + " must be a number or {\"param\": name}");
}

Json spec_json(const ScalarSpec& s) {
  if (s.is_fixed()) return std::get<double>(s.value);
  return Json{{"param", std::get<std::string>(s.value)}};
}

int require_int(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_number_integer())
    throw InputError(where + ": missing integer field '" + key + "'");
  return j[key].get<int>();
}

std::vector<std::string> string_list(const Json& j, const char* key) {
  std::vector<std::string> out;
  if (!j.contains(key)) return out;
  if (!j[key].is_array()) throw InputError(std::string("partition.") + key + " must be an array");
  for (const auto& e : j[key]) {
    if (!e.is_string()) throw InputError(std::string("partition.") + key + " must contain strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace

FrameworkFile parse_framework(const Json& j) {
  if (!j.is_object()) throw InputError("framework description must be a JSON object");
  FrameworkFile f;
  f.name = j.value("name", std::string("framework"));
  f.framework.dim = require_int(j, "dim", "framework");
  f.framework.n_nodes = require_int(j, "nodes", "framework");
  if (j.contains("bars")) {
    for (std::size_t k = 0; k < j["bars"].size(); ++k) {
      const auto& b = j["bars"][k];
      const std::string where = "bars[" + std::to_string(k) + "]";
      if (!b.contains("length")) throw InputError(where + ": missing 'length'");
      f.framework.bars.push_back({require_int(b, "i", where), require_int(b, "j", where),
                                  parse_spec(b["length"], where + ".length")});
    }
  }
  if (j.contains("cables")) {
    for (std::size_t k = 0; k < j["cables"].size(); ++k) {
      const auto& c = j["cables"][k];
      const std::string where = "cables[" + std::to_string(k) + "]";
      if (!c.contains("rest") || !c.contains("elasticity"))
        throw InputError(where + ": needs 'rest' and 'elasticity'");
      f.framework.cables.push_back({require_int(c, "i", where), require_int(c, "j", where),
                                    parse_spec(c["rest"], where + ".rest"),
                                    parse_spec(c["elasticity"], where + ".elasticity")});
    }
  }
  if (!j.contains("partition") || !j["partition"].is_object()) throw InputError("missing 'partition' object");
  const auto& p = j["partition"];
  f.partition.internal = string_list(p, "internal");
  f.partition.control = string_list(p, "control");
  if (p.contains("fixed")) {
    if (!p["fixed"].is_object()) throw InputError("partition.fixed must be an object");
    for (const auto& [k, v] : p["fixed"].items()) {
      if (!v.is_number()) throw InputError("partition.fixed." + k + " must be a number");
      f.partition.fixed[k] = v.get<double>();
    }
  }
  if (j.contains("slice") && !j["slice"].is_null()) {
    ControlSlice s;
    s.base = rvector_from_json(j["slice"].at("base"));
    for (const auto& d : j["slice"].value("directions", Json::array())) s.directions.push_back(rvector_from_json(d));
    f.slice = s;
  }
  f.source_hash = fnv1a_hex(j.dump());
  return f;
}

FrameworkFile load_framework_file(const std::string& path) {
  const std::string text = read_text_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
  FrameworkFile f = parse_framework(j);
  f.source_hash = fnv1a_hex(text);
  return f;
}

Json framework_to_json(const FrameworkFile& f) {
  Json j;
  j["name"] = f.name;
  j["dim"] = f.framework.dim;
  j["nodes"] = f.framework.n_nodes;
  j["bars"] = Json::array();
  for (const auto& b : f.framework.bars) j["bars"].push_back({{"i", b.i}, {"j", b.j}, {"length", spec_json(b.length)}});
  j["cables"] = Json::array();
  for (const auto& c : f.framework.cables)
    j["cables"].push_back(
        {{"i", c.i}, {"j", c.j}, {"rest", spec_json(c.rest)}, {"elasticity", spec_json(c.elasticity)}});
  j["partition"] = {{"internal", f.partition.internal},
                    {"control", f.partition.control},
                    {"fixed", Json(f.partition.fixed)}};
  if (f.slice) {
    Json dirs = Json::array();
    for (const auto& d : f.slice->directions) dirs.push_back(to_json(d));
    j["slice"] = {{"base", to_json(f.slice->base)}, {"directions", dirs}};
  }
  return j;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << text;
}

Json to_json(const RVector& v) {
  Json a = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
  return a;
}

Json to_json(const CVector& v) {
  Json a = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back({v[k].real(), v[k].imag()});
  return a;
}

RVector rvector_from_json(const Json& j) {
  if (!j.is_array()) throw InputError("expected an array of numbers");
  RVector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) throw InputError("expected an array of numbers");
    v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
  }
  return v;
}

CVector cvector_from_json(const Json& j) {
  if (!j.is_array()) throw InputError("expected an array of [re, im] pairs");
  CVector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    const auto& e = j[k];
    if (!e.is_array() || e.size() != 2) throw InputError("expected an array of [re, im] pairs");
    v[static_cast<Eigen::Index>(k)] = Complex(e[0].get<double>(), e[1].get<double>());
  }
  return v;
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf.data(), ptr);
}

namespace {

const char* palette(int v) {
  static const char* colors[] = {"#f7fbff", "#c6dbef", "#6baed6", "#2171b5", "#08306b", "#54278f", "#a50f15"};
  if (v < 0) return "#ffffff";
  return colors[std::min(v, 6)];
}

std::string svg_header(double w, double h, const std::string& title) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h + 30 << "\">\n";
  s << "<text x=\"10\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  return s.str();
}

}  // namespace

std::string svg_heatmap(const std::vector<std::vector<int>>& field, double x0, double x1, double y0, double y1,
                        const std::string& title) {
  const double size = 480.0;
  std::ostringstream s;
  s << svg_header(size, size, title + " [" + format_double(x0) + "," + format_double(x1) + "]x[" +
                                  format_double(y0) + "," + format_double(y1) + "]");
  const std::size_t ny = field.size();
  const std::size_t nx = ny ? field[0].size() : 0;
  if (nx && ny) {
    const double cw = size / static_cast<double>(nx), ch = size / static_cast<double>(ny);
    for (std::size_t r = 0; r < ny; ++r)
      for (std::size_t c = 0; c < nx; ++c) {
        // row 0 is the bottom of the control rectangle
        const double px = static_cast<double>(c) * cw;
        const double py = 30.0 + size - static_cast<double>(r + 1) * ch;
        s << "<rect x=\"" << px << "\" y=\"" << py << "\" width=\"" << cw + 0.05 << "\" height=\"" << ch + 0.05
          << "\" fill=\"" << palette(field[r][c]) << "\"><title>" << field[r][c] << "</title></rect>\n";
      }
  }
  s << "</svg>\n";
  return s.str();
}

std::string svg_scatter(const std::vector<SvgPoint>& points, double x0, double x1, double y0, double y1,
                        const std::string& title) {
  const double size = 480.0;
  std::ostringstream s;
  s << svg_header(size, size, title);
  s << "<rect x=\"0\" y=\"30\" width=\"" << size << "\" height=\"" << size
    << "\" fill=\"none\" stroke=\"#888\"/>\n";
  for (const auto& p : points) {
    if (p.x < x0 || p.x > x1 || p.y < y0 || p.y > y1) continue;
    const double px = (p.x - x0) / (x1 - x0) * size;
    const double py = 30.0 + size - (p.y - y0) / (y1 - y0) * size;
    if (p.filled)
      s << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"1.6\" fill=\"#b2182b\"/>\n";
    else
      s << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"1.6\" fill=\"none\" stroke=\"#2166ac\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace tensegrity
