#include "rcmact/config.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "rcmact/error.hpp"
#include "rcmact/text_format.hpp"

namespace rcmact {
namespace {

struct Entry {
  std::function<void(PipelineConfig&, std::string_view)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

using Registry = std::map<std::string, Entry, std::less<>>;

template <class Get>
void add_real(Registry& r, const std::string& key, Get field) {
  r[key] = {[field](PipelineConfig& c, std::string_view v) { field(c) = parse_real(v); },
            [field](const PipelineConfig& c) { return format_real(field(const_cast<PipelineConfig&>(c))); }};
}

template <class Get>
void add_int(Registry& r, const std::string& key, Get field) {
  r[key] = {[field](PipelineConfig& c, std::string_view v) {
              using T = std::remove_reference_t<decltype(field(c))>;
              const long long x = parse_int(v);
              if constexpr (std::is_unsigned_v<T>) {
                if (x < 0) throw Error(ErrorCode::TypeError, "expected a non-negative integer");
              }
              field(c) = static_cast<T>(x);
            },
            [field](const PipelineConfig& c) { return std::to_string(field(const_cast<PipelineConfig&>(c))); }};
}

void add_vec3(Registry& r, const std::string& key, std::function<Vec3&(PipelineConfig&)> field) {
  r[key] = {[field](PipelineConfig& c, std::string_view v) {
              const std::vector<double> x = parse_reals(v);
              if (x.size() != 3) throw Error(ErrorCode::TypeError, "expected 3 comma-separated reals");
              field(c) = Vec3(x[0], x[1], x[2]);
            },
            [field](const PipelineConfig& c) {
              const Vec3& p = field(const_cast<PipelineConfig&>(c));
              return format_reals(std::span<const double>(p.data(), 3));
            }};
}

Registry build_registry() {
  Registry r;
  add_real(r, "world.black_ring_diameter", [](PipelineConfig& c) -> double& { return c.world.black_ring_diameter; });
  add_real(r, "world.orange_ring_diameter", [](PipelineConfig& c) -> double& { return c.world.orange_ring_diameter; });
  add_real(r, "world.workspace_half_extent",
           [](PipelineConfig& c) -> double& { return c.world.workspace_half_extent; });
  add_vec3(r, "world.rcm_reference", [](PipelineConfig& c) -> Vec3& { return c.world.rcm_reference; });
  r["world.fiducial_reference"] = {
      [](PipelineConfig& c, std::string_view v) {
        const std::vector<double> x = parse_reals(v);
        if (x.size() != 9) throw Error(ErrorCode::TypeError, "expected 9 comma-separated reals");
        for (int i = 0; i < 3; ++i) c.world.fiducial_reference[i] = Vec3(x[3 * i], x[3 * i + 1], x[3 * i + 2]);
      },
      [](const PipelineConfig& c) {
        std::vector<double> x;
        for (const Vec3& p : c.world.fiducial_reference.points) x.insert(x.end(), p.data(), p.data() + 3);
        return format_reals(x);
      }};
  add_real(r, "world.drift_translation_max",
           [](PipelineConfig& c) -> double& { return c.world.drift_translation_max; });
  add_real(r, "world.drift_rotation_max", [](PipelineConfig& c) -> double& { return c.world.drift_rotation_max; });
  add_real(r, "world.fiducial_noise_sigma", [](PipelineConfig& c) -> double& { return c.world.fiducial_noise_sigma; });
  add_real(r, "world.control_rate_hz", [](PipelineConfig& c) -> double& { return c.world.control_rate_hz; });
  add_real(r, "world.success_tolerance", [](PipelineConfig& c) -> double& { return c.world.success_tolerance; });
  add_int(r, "world.time_limit_steps", [](PipelineConfig& c) -> int& { return c.world.time_limit_steps; });
  add_real(r, "world.camera_baseline", [](PipelineConfig& c) -> double& { return c.world.camera_baseline; });
  add_real(r, "world.camera_focal", [](PipelineConfig& c) -> double& { return c.world.camera_focal; });
  add_real(r, "world.camera_height", [](PipelineConfig& c) -> double& { return c.world.camera_height; });
  add_vec3(r, "world.home_tip", [](PipelineConfig& c) -> Vec3& { return c.world.home_tip; });
  add_real(r, "world.max_step", [](PipelineConfig& c) -> double& { return c.world.max_step; });
  add_real(r, "world.grasp_radius", [](PipelineConfig& c) -> double& { return c.world.grasp_radius; });
  add_real(r, "world.roll_rate", [](PipelineConfig& c) -> double& { return c.world.roll_rate; });
  add_real(r, "world.gripper_rate", [](PipelineConfig& c) -> double& { return c.world.gripper_rate; });

  add_int(r, "policy.chunk_size", [](PipelineConfig& c) -> int& { return c.policy.chunk_size; });
  add_int(r, "policy.latent_dim", [](PipelineConfig& c) -> int& { return c.policy.latent_dim; });
  r["policy.hidden_dims"] = {[](PipelineConfig& c, std::string_view v) {
                               std::vector<int> dims;
                               std::string s(v);
                               std::stringstream ss(s);
                               for (std::string item; std::getline(ss, item, ',');) {
                                 dims.push_back(static_cast<int>(parse_int(item)));
                               }
                               c.policy.hidden_dims = dims;
                             },
                             [](const PipelineConfig& c) {
                               std::string out;
                               for (std::size_t i = 0; i < c.policy.hidden_dims.size(); ++i) {
                                 if (i) out += ',';
                                 out += std::to_string(c.policy.hidden_dims[i]);
                               }
                               return out;
                             }};
  add_real(r, "policy.beta", [](PipelineConfig& c) -> double& { return c.policy.beta; });
  add_real(r, "policy.dropout", [](PipelineConfig& c) -> double& { return c.policy.dropout; });
  add_real(r, "policy.lr", [](PipelineConfig& c) -> double& { return c.policy.lr; });
  add_real(r, "policy.adam_beta1", [](PipelineConfig& c) -> double& { return c.policy.adam_beta1; });
  add_real(r, "policy.adam_beta2", [](PipelineConfig& c) -> double& { return c.policy.adam_beta2; });
  add_real(r, "policy.adam_eps", [](PipelineConfig& c) -> double& { return c.policy.adam_eps; });
  add_real(r, "policy.weight_decay", [](PipelineConfig& c) -> double& { return c.policy.weight_decay; });
  add_int(r, "policy.epochs", [](PipelineConfig& c) -> int& { return c.policy.epochs; });
  add_int(r, "policy.batch_size", [](PipelineConfig& c) -> int& { return c.policy.batch_size; });
  add_int(r, "policy.steps_per_epoch", [](PipelineConfig& c) -> int& { return c.policy.steps_per_epoch; });
  r["policy.lr_schedule"] = {
      [](PipelineConfig& c, std::string_view v) { c.policy.lr_schedule = parse_lr_schedule(v); },
      [](const PipelineConfig& c) { return std::string(to_string(c.policy.lr_schedule)); }};
  r["policy.activation"] = {
      [](PipelineConfig& c, std::string_view v) { c.policy.activation = parse_activation(v); },
      [](const PipelineConfig& c) { return std::string(to_string(c.policy.activation)); }};
  add_int(r, "policy.seed", [](PipelineConfig& c) -> std::uint64_t& { return c.policy.seed; });

  r["ensemble.weight_schedule"] = {
      [](PipelineConfig& c, std::string_view v) { c.ensemble.schedule = parse_weight_schedule(v); },
      [](const PipelineConfig& c) { return std::string(to_string(c.ensemble.schedule)); }};
  add_real(r, "ensemble.m", [](PipelineConfig& c) -> double& { return c.ensemble.m; });
  add_int(r, "ensemble.window", [](PipelineConfig& c) -> int& { return c.ensemble.window; });
  add_int(r, "ensemble.replan_every", [](PipelineConfig& c) -> int& { return c.ensemble.replan_every; });

  add_real(r, "expert.noise", [](PipelineConfig& c) -> double& { return c.expert_noise; });
  return r;
}

const Registry& registry() {
  static const Registry r = build_registry();
  return r;
}

const Entry& lookup(std::string_view key, std::string* canonical = nullptr) {
  const Registry& r = registry();
  if (auto it = r.find(key); it != r.end()) {
    if (canonical) *canonical = it->first;
    return it->second;
  }
  if (key.find('.') == std::string_view::npos) {
    const Entry* found = nullptr;
    int hits = 0;
    for (const auto& [k, e] : r) {
      const auto dot = k.find('.');
      if (std::string_view(k).substr(dot + 1) == key) {
        found = &e;
        if (canonical) *canonical = k;
        ++hits;
      }
    }
    if (hits == 1) return *found;
  }
  throw Error(ErrorCode::UnknownKey, "unknown config key '" + std::string(key) + "'");
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, e] : registry()) keys.push_back(k);
  return keys;
}

void apply_setting(PipelineConfig& cfg, std::string_view key, std::string_view value) {
  std::string canonical;
  const Entry& e = lookup(key, &canonical);
  try {
    e.set(cfg, value);
  } catch (const Error& err) {
    if (err.code() == ErrorCode::UnknownKey) throw;
    throw Error(ErrorCode::TypeError, "config key '" + canonical + "': " + err.what());
  }
}

std::string get_setting(const PipelineConfig& cfg, std::string_view key) { return lookup(key).get(cfg); }

PipelineConfig parse_config(std::string_view text, const PipelineConfig& base) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::TypeError, std::string("config syntax: ") + e.what());
  }
  PipelineConfig cfg = base;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      const bool bare_section =
          node.data().empty() && (name == "world" || name == "policy" || name == "ensemble" || name == "expert");
      if (bare_section) continue;
      apply_setting(cfg, name, node.data());
      continue;
    }
    for (const auto& [key, leaf] : node) apply_setting(cfg, name + "." + key, leaf.data());
  }
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path, const PipelineConfig& base) {
  return parse_config(read_file(path), base);
}

std::string format_config(const PipelineConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& [k, e] : registry()) {
    const auto dot = k.find('.');
    const std::string s = k.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out << '\n';
      out << '[' << s << "]\n";
      section = s;
    }
    out << k.substr(dot + 1) << " = " << e.get(cfg) << '\n';
  }
  return out.str();
}

std::map<std::string, std::string> world_config_echo(const WorldConfig& world) {
  PipelineConfig cfg;
  cfg.world = world;
  std::map<std::string, std::string> out;
  for (const auto& [k, e] : registry()) {
    if (k.rfind("world.", 0) == 0) out[k.substr(6)] = e.get(cfg);
  }
  return out;
}

}  // namespace rcmact
