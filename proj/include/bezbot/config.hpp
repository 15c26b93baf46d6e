#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bezbot/avoidance.hpp"
#include "bezbot/control.hpp"
#include "bezbot/dynamics.hpp"
#include "bezbot/encoding.hpp"
#include "bezbot/errors.hpp"
#include "bezbot/plant.hpp"

namespace bezbot {

// Minimal TOML-style key-value file: [section] headers, `key = value`
// lines, `#` comments. Values are numbers, quoted strings, booleans, or
// flat arrays of numbers. Keys are exposed flattened as "section.key".
class ConfigMap {
 public:
  static ConfigMap parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  static ConfigMap parse(const std::string& text, const std::string& origin = "<string>") {
    ConfigMap cfg;
    std::string section;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty() || value.empty())
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key or value");
      cfg.values_[section.empty() ? key : section + "." + key] = value;
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  double get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return to_double(it->second, key);
  }

  int get_int(const std::string& key, int fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const double v = to_double(it->second, key);
    return static_cast<int>(std::llround(v));
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true") return true;
    if (it->second == "false") return false;
    throw ConfigError("config key " + key + " is not a boolean: " + it->second);
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::string v = it->second;
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
    return v;
  }

  std::vector<double> get_array(const std::string& key,
                                const std::vector<double>& fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& v = it->second;
    if (v.size() < 2 || v.front() != '[' || v.back() != ']')
      throw ConfigError("config key " + key + " is not an array: " + v);
    std::vector<double> out;
    std::string item;
    std::istringstream items(v.substr(1, v.size() - 2));
    while (std::getline(items, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      out.push_back(to_double(item, key));
    }
    return out;
  }

  const std::map<std::string, std::string>& raw() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
  }
  static double to_double(const std::string& s, const std::string& key) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " is not a number: " + s);
    }
    if (used != s.size()) throw ConfigError("config key " + key + " is not a number: " + s);
    return v;
  }

  std::map<std::string, std::string> values_;
};

// Everything a harness run needs, assembled from one config file.
struct SystemConfig {
  PlantParams plant;
  ViewSpec view1, view2;
  EncodeConfig enc;
  ControllerGains gains;
  AvoidanceConfig avoid;
  ModelSpec shape_spec, position_spec;
  TrainHyper hyper;
  double delta_u = 0.01;
  double dt = 0.05;
  double duration = 10.0;
  double collect_u_bound = 0.95;
  double collect_interval = 0.0;  // 0: use the model horizon
  int ff_window = 3;              // ticks spanned by the reference-rate difference
  double tip_noise_std = 0.0;

  static SystemConfig from_map(const ConfigMap& c) {
    SystemConfig s;
    s.plant.segments = c.get_int("plant.segments", 3);
    s.plant.seg_len = c.get_double("plant.segment_length", 0.1);
    s.plant.curvature_gain = c.get_double("plant.curvature_gain", 4.5);
    s.plant.cubic_eps = c.get_double("plant.cubic_eps", 0.08);
    s.plant.tau = c.get_double("plant.tau", 0.05);
    s.plant.u_dot_max = c.get_double("plant.u_dot_max", 0.8);
    s.plant.pts_per_seg = c.get_int("plant.points_per_segment", 40);

    const auto a1 = c.get_array("view.anchor1", {128.0, 24.0});
    const auto a2 = c.get_array("view.anchor2", {128.0, 24.0});
    if (a1.size() != 2 || a2.size() != 2) throw ConfigError("view anchors must be [x, y]");
    for (ViewSpec* v : {&s.view1, &s.view2}) {
      v->scale = c.get_double("view.scale", 600.0);
      v->stroke_width = c.get_double("view.stroke_width", 9.0);
      v->width = c.get_int("view.width", 256);
      v->height = c.get_int("view.height", 256);
    }
    s.view1.view_id = 1;
    s.view1.anchor = Point2(a1[0], a1[1]);
    s.view2.view_id = 2;
    s.view2.anchor = Point2(a2[0], a2[1]);

    s.enc.segments = s.plant.segments;
    const std::string policy = c.get_string("encoding.threshold", "otsu");
    if (policy == "otsu") {
      s.enc.binarize.policy = ThresholdPolicy::Otsu;
    } else if (policy == "fixed") {
      s.enc.binarize.policy = ThresholdPolicy::Fixed;
    } else {
      throw ConfigError("encoding.threshold must be \"otsu\" or \"fixed\"");
    }
    s.enc.binarize.fixed_threshold = c.get_int("encoding.fixed_threshold", 128);
    s.enc.close_radius = c.get_int("encoding.close_radius", 2);
    s.enc.spur_len = c.get_int("encoding.spur_len", 3);
    s.enc.end_extension = c.get_int("encoding.end_extension", 24);
    s.enc.anchor_view1 = s.view1.anchor;
    s.enc.anchor_view2 = s.view2.anchor;

    const auto hidden = c.get_array("model.hidden", {64.0, 64.0});
    std::vector<int> hidden_i;
    for (double h : hidden) hidden_i.push_back(static_cast<int>(std::llround(h)));
    for (ModelSpec* m : {&s.shape_spec, &s.position_spec}) {
      m->hidden = hidden_i;
      m->input_dim = s.plant.actuators();
      m->time_input = c.get_bool("model.time_input", false);
      m->h_step = c.get_double("model.h_step", 0.0125);
      m->horizon = c.get_double("model.horizon", 0.15);
    }
    s.shape_spec.state_dim = shape_state_dim(s.plant.segments);
    s.position_spec.state_dim = 3;

    s.hyper.epochs = c.get_int("model.epochs", 600);
    s.hyper.batch_size = c.get_int("model.batch_size", 32);
    s.hyper.lr = c.get_double("model.learning_rate", 1e-3);
    s.hyper.val_frac = c.get_double("model.val_frac", 0.1);

    s.gains.lambda_s = c.get_double("control.lambda_s", 1.3);
    s.gains.lambda_p = c.get_double("control.lambda_p", 2.0);
    s.gains.lambda_damp = c.get_double("control.lambda_damp", 3e-2);
    s.gains.u_dot_max = c.get_double("control.u_dot_max", s.plant.u_dot_max);
    s.delta_u = c.get_double("control.delta_u", 0.01);

    s.avoid.d_w = c.get_double("avoid.d_w", 25.0);
    s.avoid.alpha = c.get_double("avoid.alpha", 0.001);
    s.avoid.n_d = c.get_int("avoid.n_d", 300);
    s.avoid.lambda_pinv = c.get_double("avoid.lambda_pinv", 1e-6);

    s.dt = c.get_double("run.dt", 0.05);
    s.duration = c.get_double("run.duration", 10.0);
    s.collect_u_bound = c.get_double("collect.u_bound", 0.95);
    s.collect_interval = c.get_double("collect.sample_interval", 0.0);
    s.ff_window = c.get_int("run.ff_window", 3);
    s.tip_noise_std = c.get_double("collect.tip_noise_std", 0.0);

    if (s.dt <= 0.0 || s.duration <= 0.0) throw ConfigError("run.dt and run.duration must be > 0");
    return s;
  }

  static SystemConfig from_file(const std::string& path) {
    return from_map(ConfigMap::parse_file(path));
  }
};

}  // namespace bezbot
