#include "tensegrity/cache.hpp"

#include <cstdlib>
#include <filesystem>
#include <thread>

namespace tensegrity {

namespace fs = std::filesystem;

std::optional<std::string> cache_dir_from_env() {
  const char* v = std::getenv("TENSEGRITY_CACHE_DIR");
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

namespace {

std::string key(const FrameworkModel& model, const TrackerConfig& cfg) {
  return system_hash(model) + "-" + std::to_string(cfg.rng_seed);
}

std::optional<Json> read_cache(const std::string& path) {
  std::error_code ec;
  if (!fs::exists(path, ec)) return std::nullopt;
  try {
    return Json::parse(read_text_file(path));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void write_cache(const std::string& path, const Json& j) {
  std::error_code ec;
  fs::create_directories(fs::path(path).parent_path(), ec);
  const std::string tmp = path + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  write_text_file(tmp, j.dump());
  fs::rename(tmp, path, ec);
  if (ec) fs::remove(tmp, ec);
}

}  // namespace

std::string seed_cache_path(const std::string& dir, const FrameworkModel& model, const TrackerConfig& cfg) {
  return (fs::path(dir) / ("seed-" + key(model, cfg) + ".json")).string();
}

std::string witness_cache_path(const std::string& dir, const FrameworkModel& model, const TrackerConfig& cfg) {
  return (fs::path(dir) / ("witness-" + key(model, cfg) + ".json")).string();
}

EquilibriumSeed cached_generic_seed(const FrameworkModel& model, const TrackerConfig& cfg,
                                    const std::optional<std::string>& dir) {
  if (dir) {
    const std::string path = seed_cache_path(*dir, model, cfg);
    if (const auto j = read_cache(path)) {
      try {
        EquilibriumSeed s = seed_from_json(*j);
        if (static_cast<std::size_t>(s.params.size()) == model.n_control()) return s;
      } catch (const std::exception&) {
      }
    }
    EquilibriumSeed s = generic_seed(model, cfg);
    write_cache(path, seed_to_json(s));
    return s;
  }
  return generic_seed(model, cfg);
}

PseudoWitnessSet cached_witness(std::shared_ptr<const FrameworkModel> model, const TrackerConfig& cfg,
                                const std::optional<std::string>& dir, const WitnessOptions& opts) {
  if (dir) {
    const std::string path = witness_cache_path(*dir, *model, cfg);
    if (const auto j = read_cache(path)) {
      try {
        return witness_from_json(*j, model);
      } catch (const std::exception&) {
      }
    }
    PseudoWitnessSet w = witness_on_generic_line(model, cfg, opts);
    if (w.complete) write_cache(path, witness_to_json(w));
    return w;
  }
  return witness_on_generic_line(model, cfg, opts);
}

}  // namespace tensegrity
