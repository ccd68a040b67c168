#include "dfuse/run_config.hpp"

#include <cstdio>
#include <set>
#include <type_traits>

#include <json.hpp>

#include "depthfuse/data_io.hpp"
#include "depthfuse/error.hpp"

namespace dfuse {
namespace {

using depthfuse::ConfigError;
using nlohmann::json;

std::string join(std::string_view path, std::string_view key) {
  return path.empty() ? std::string(key) : std::string(path) + "." + std::string(key);
}

// Reads one JSON object, tracking which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError((path_.empty() ? "config" : path_) + " must be a JSON object");
  }

  void check_unknown() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown key '" + join(path_, key) + "'");
    }
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  Section sub(const std::string& key) {
    static const json empty = json::object();
    const json* v = find(key);
    return Section(v ? *v : empty, join(path_, key));
  }

  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(key, "a boolean");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key, "a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, float& out) {
    double d = out;
    get(key, d);
    out = static_cast<float>(d);
  }
  void get(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) fail(key, "a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void get(const std::string& key, std::optional<double>& out) {
    if (const json* v = find(key)) {
      if (v->is_null()) {
        out.reset();
      } else if (v->is_number()) {
        out = v->get<double>();
      } else {
        fail(key, "a number or null");
      }
    }
  }
  void get(const std::string& key, std::vector<std::size_t>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key, "an array of non-negative integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_unsigned()) fail(key, "an array of non-negative integers");
        out.push_back(e.get<std::size_t>());
      }
    }
  }
  void get(const std::string& key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key, "an array of numbers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) fail(key, "an array of numbers");
        out.push_back(e.get<double>());
      }
    }
  }
  void get(const std::string& key, std::array<float, 3>& out) {
    std::vector<double> v(out.begin(), out.end());
    get(key, v);
    if (v.size() != 3) throw ConfigError("'" + join(path_, key) + "' must have exactly 3 entries");
    for (int c = 0; c < 3; ++c) out[c] = static_cast<float>(v[c]);
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key, "a string");
      out = v->get<std::string>();
    }
  }

  const std::string& path() const { return path_; }

 private:
  [[noreturn]] void fail(const std::string& key, const char* expected) const {
    throw ConfigError("'" + join(path_, key) + "' must be " + expected);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Re-throws a validation failure with the section name attached.
template <typename F>
void validated(const std::string& section, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(section, 0) == 0) throw;
    throw ConfigError(section + ": " + msg);
  }
}

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seeds are read as std::size_t");

json to_json(const RunConfig& c) {
  const auto& n = c.network;
  const auto& t = c.train;
  json j;
  j["network"] = {
      {"input_channels", n.input_channels},
      {"stage_widths", n.backbone.stage_widths},
      {"units_per_stage", n.backbone.units_per_stage},
      {"norm_group_channels", n.backbone.norm_group_channels},
      {"skip_connections", n.skip_connections},
      {"depth_bins", n.depth_bins},
      {"concat", n.multiscale.concat},
      {"dilation", n.dilated.dilation},
      {"multiscale",
       {{"kernel_sizes", n.multiscale.kernel_sizes},
        {"branch_channels", n.multiscale.branch_channels},
        {"repeats", n.multiscale.repeats}}},
      {"dilated",
       {{"rates", n.dilated.rates},
        {"kernel_size", n.dilated.kernel_size},
        {"branch_channels", n.dilated.branch_channels},
        {"repeats", n.dilated.repeats}}},
  };
  j["train"] = {
      {"iterations", t.iterations},
      {"eval_interval", t.eval_interval},
      {"checkpoint_interval", t.checkpoint_interval},
      {"seed", t.seed},
      {"init_seed", t.init_seed},
  };
  j["optimizer"] = {
      {"kind", std::string(depthfuse::to_string(t.optimizer.kind))},
      {"learning_rate", t.optimizer.learning_rate},
      {"momentum", t.optimizer.momentum},
      {"beta2", t.optimizer.beta2},
      {"epsilon", t.optimizer.epsilon},
      {"weight_decay", t.optimizer.weight_decay},
      {"batch_size", t.optimizer.batch_size},
  };
  j["loss"] = {
      {"alpha", t.loss.alpha},
      {"beta", t.loss.beta},
      {"gamma", t.loss.gamma},
      {"ssim_window", t.loss.ssim_window},
      {"ssim_k1", t.loss.ssim_k1},
      {"ssim_k2", t.loss.ssim_k2},
      {"ssim_c1", t.loss.ssim_c1 ? json(*t.loss.ssim_c1) : json(nullptr)},
      {"ssim_c2", t.loss.ssim_c2 ? json(*t.loss.ssim_c2) : json(nullptr)},
  };
  j["discretization"] = {{"d_min", t.discretization.d_min}, {"d_max", t.discretization.d_max}};
  const auto& a = t.augment;
  j["augment"] = {
      {"enabled", t.augment_enabled},
      {"scale_min", a.scale_min},
      {"scale_max", a.scale_max},
      {"rotation_deg", a.rotation_deg},
      {"jitter_min", a.jitter_min},
      {"jitter_max", a.jitter_max},
      {"flip_probability", a.flip_probability},
      {"mean", a.mean},
      {"std", a.std},
  };
  return j;
}

}  // namespace

void RunConfig::validate() const {
  validated("network", [&] { network.validate(); });
  validated("train", [&] { train.validate(); });
  if (train.discretization.bins != network.depth_bins) {
    throw ConfigError("discretization bins must equal network.depth_bins");
  }
}

RunConfig parse_run_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Section root(j, "");
  {
    auto& n = c.network;
    Section s = root.sub("network");
    s.get("input_channels", n.input_channels);
    s.get("stage_widths", n.backbone.stage_widths);
    s.get("units_per_stage", n.backbone.units_per_stage);
    s.get("norm_group_channels", n.backbone.norm_group_channels);
    s.get("skip_connections", n.skip_connections);
    s.get("depth_bins", n.depth_bins);
    s.get("concat", n.multiscale.concat);
    s.get("dilation", n.dilated.dilation);
    Section ms = s.sub("multiscale");
    ms.get("kernel_sizes", n.multiscale.kernel_sizes);
    ms.get("branch_channels", n.multiscale.branch_channels);
    ms.get("repeats", n.multiscale.repeats);
    ms.check_unknown();
    Section dl = s.sub("dilated");
    dl.get("rates", n.dilated.rates);
    dl.get("kernel_size", n.dilated.kernel_size);
    dl.get("branch_channels", n.dilated.branch_channels);
    dl.get("repeats", n.dilated.repeats);
    dl.check_unknown();
    s.check_unknown();
  }
  auto& t = c.train;
  {
    Section s = root.sub("train");
    s.get("iterations", t.iterations);
    s.get("eval_interval", t.eval_interval);
    s.get("checkpoint_interval", t.checkpoint_interval);
    s.get("seed", t.seed);
    s.get("init_seed", t.init_seed);
    s.check_unknown();
  }
  {
    Section s = root.sub("optimizer");
    std::string kind(depthfuse::to_string(t.optimizer.kind));
    s.get("kind", kind);
    validated("optimizer.kind", [&] { t.optimizer.kind = depthfuse::parse_optimizer_kind(kind); });
    s.get("learning_rate", t.optimizer.learning_rate);
    s.get("momentum", t.optimizer.momentum);
    s.get("beta2", t.optimizer.beta2);
    s.get("epsilon", t.optimizer.epsilon);
    s.get("weight_decay", t.optimizer.weight_decay);
    s.get("batch_size", t.optimizer.batch_size);
    s.check_unknown();
  }
  {
    Section s = root.sub("loss");
    s.get("alpha", t.loss.alpha);
    s.get("beta", t.loss.beta);
    s.get("gamma", t.loss.gamma);
    s.get("ssim_window", t.loss.ssim_window);
    s.get("ssim_k1", t.loss.ssim_k1);
    s.get("ssim_k2", t.loss.ssim_k2);
    s.get("ssim_c1", t.loss.ssim_c1);
    s.get("ssim_c2", t.loss.ssim_c2);
    s.check_unknown();
  }
  {
    Section s = root.sub("discretization");
    s.get("d_min", t.discretization.d_min);
    s.get("d_max", t.discretization.d_max);
    s.check_unknown();
  }
  {
    Section s = root.sub("augment");
    s.get("enabled", t.augment_enabled);
    s.get("scale_min", t.augment.scale_min);
    s.get("scale_max", t.augment.scale_max);
    s.get("rotation_deg", t.augment.rotation_deg);
    s.get("jitter_min", t.augment.jitter_min);
    s.get("jitter_max", t.augment.jitter_max);
    s.get("flip_probability", t.augment.flip_probability);
    s.get("mean", t.augment.mean);
    s.get("std", t.augment.std);
    s.check_unknown();
  }
  root.check_unknown();
  t.discretization.bins = c.network.depth_bins;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const auto bytes = depthfuse::read_file(path);
  return parse_run_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string canonical_json(const RunConfig& config) { return to_json(config).dump(); }

std::string fnv1a64_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string fingerprint(const RunConfig& config) { return fnv1a64_hex(canonical_json(config)); }

}  // namespace dfuse
