#include "gbdqn/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace gbdqn {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

double parse_double(const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw std::invalid_argument("expected a number, got '" + v + "'");
  return x;
}

long long parse_int(const std::string& v) {
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw std::invalid_argument("expected an integer, got '" + v + "'");
  return x;
}

std::size_t parse_count(const std::string& v) {
  const long long x = parse_int(v);
  if (x < 0) throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true/false, got '" + v + "'");
}

// Shortest text that parses back to the same double.
std::string fmt(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string fmt(bool b) { return b ? "true" : "false"; }

template <typename T>
std::string join(const std::vector<T>& items, auto&& to_str) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += to_str(items[i]);
  }
  return out;
}

}  // namespace

// Agent settings ---------------------------------------------------------------

void apply_agent_setting(AgentConfig& c, const std::string& key, const std::string& value) {
  if (key == "discount") c.discount = parse_double(value);
  else if (key == "lr") c.lr = parse_double(value);
  else if (key == "batch_size") c.batch_size = static_cast<int>(parse_int(value));
  else if (key == "buffer_capacity") c.buffer_capacity = parse_count(value);
  else if (key == "learn_start_steps") c.learn_start_steps = parse_int(value);
  else if (key == "update_every_steps") c.update_every_steps = parse_int(value);
  else if (key == "polyak_tau") c.polyak_tau = parse_double(value);
  else if (key == "clip_norm") c.clip_norm = parse_double(value);
  else if (key == "epsilon_start") c.epsilon.start = parse_double(value);
  else if (key == "epsilon_end") c.epsilon.end = parse_double(value);
  else if (key == "epsilon_decay_steps") c.epsilon.decay_steps = parse_int(value);
  else if (key == "epsilon_rearm_on_drift") c.epsilon_rearm_on_drift = parse_bool(value);
  else if (key == "policy") c.policy = policy_from_string(value);
  else if (key == "softmax_tau") c.softmax_tau = parse_double(value);
  else if (key == "mix_beta") c.priority.mix_beta = parse_double(value);
  else if (key == "decay_alpha") c.priority.decay_alpha = parse_double(value);
  else if (key == "td_exponent") c.priority.td_exponent = parse_double(value);
  else if (key == "td_epsilon") c.priority.td_epsilon = parse_double(value);
  else if (key == "is_beta") c.priority.is_beta = parse_double(value);
  else if (key == "insert_mode") c.insert_mode = insert_mode_from_string(value);
  else if (key == "hidden") {
    c.hidden.clear();
    for (const std::string& w : split(value, ',')) c.hidden.push_back(static_cast<Index>(parse_int(w)));
  } else if (key == "eta_boost") c.eta_boost = parse_double(value);
  else if (key == "first_learner_alpha") c.first_learner_alpha = parse_double(value);
  else if (key == "commit_mode") c.commit_mode = commit_mode_from_string(value);
  else if (key == "alpha_max") c.alpha_max = parse_double(value);
  else if (key == "line_search_batch") c.line_search_batch = parse_count(value);
  else if (key == "bootstrap_excludes_active") c.bootstrap_excludes_active = parse_bool(value);
  else if (key == "act_on_frozen_only") c.act_on_frozen_only = parse_bool(value);
  else if (key == "ensemble_k") c.ensemble_k = static_cast<int>(parse_int(value));
  else if (key == "ensemble_bootstrap_masks") c.ensemble_bootstrap_masks = parse_bool(value);
  else throw std::invalid_argument("unknown agent setting '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> agent_settings(const AgentConfig& c) {
  return {
      {"discount", fmt(c.discount)},
      {"lr", fmt(c.lr)},
      {"batch_size", std::to_string(c.batch_size)},
      {"buffer_capacity", std::to_string(c.buffer_capacity)},
      {"learn_start_steps", std::to_string(c.learn_start_steps)},
      {"update_every_steps", std::to_string(c.update_every_steps)},
      {"polyak_tau", fmt(c.polyak_tau)},
      {"clip_norm", fmt(c.clip_norm)},
      {"epsilon_start", fmt(c.epsilon.start)},
      {"epsilon_end", fmt(c.epsilon.end)},
      {"epsilon_decay_steps", std::to_string(c.epsilon.decay_steps)},
      {"epsilon_rearm_on_drift", fmt(c.epsilon_rearm_on_drift)},
      {"policy", to_string(c.policy)},
      {"softmax_tau", fmt(c.softmax_tau)},
      {"mix_beta", fmt(c.priority.mix_beta)},
      {"decay_alpha", fmt(c.priority.decay_alpha)},
      {"td_exponent", fmt(c.priority.td_exponent)},
      {"td_epsilon", fmt(c.priority.td_epsilon)},
      {"is_beta", fmt(c.priority.is_beta)},
      {"insert_mode", to_string(c.insert_mode)},
      {"hidden", join(c.hidden, [](Index h) { return std::to_string(h); })},
      {"eta_boost", fmt(c.eta_boost)},
      {"first_learner_alpha", fmt(c.first_learner_alpha)},
      {"commit_mode", to_string(c.commit_mode)},
      {"alpha_max", fmt(c.alpha_max)},
      {"line_search_batch", std::to_string(c.line_search_batch)},
      {"bootstrap_excludes_active", fmt(c.bootstrap_excludes_active)},
      {"act_on_frozen_only", fmt(c.act_on_frozen_only)},
      {"ensemble_k", std::to_string(c.ensemble_k)},
      {"ensemble_bootstrap_masks", fmt(c.ensemble_bootstrap_masks)},
  };
}

// Experiment config ------------------------------------------------------------

const AgentConfig& ExperimentConfig::agent(Method m) const {
  const auto it = agents.find(m);
  if (it == agents.end()) throw std::out_of_range("no agent settings for method " + to_string(m));
  return it->second;
}

void ExperimentConfig::validate() const {
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
  if (methods.empty()) throw ConfigError("methods must be non-empty");
  if (seeds.empty()) throw ConfigError("seeds must be non-empty");
  if (final_window < 1 || final_window > episodes) throw ConfigError("final_window must be in [1, episodes]");
  if (smoothing_window < 1) throw ConfigError("smoothing_window must be >= 1");
  for (Method m : methods) {
    try {
      agent(m).validate();
    } catch (const std::exception& e) {
      throw ConfigError("[agent." + to_string(m) + "] " + e.what());
    }
  }
  for (const DriftEvent& e : schedule.events()) {
    if (e.kind == DriftKind::reset) continue;
    auto env = make_env(this->env, max_steps);
    for (const auto& [name, f] : e.factors)
      if (!env->params().contains(name))
        throw ConfigError("drift at episode " + std::to_string(e.episode) + ": " + to_string(this->env) +
                          " has no parameter '" + name + "'");
  }
}

namespace {

std::map<Method, AgentConfig> default_agents() {
  std::map<Method, AgentConfig> out;
  for (Method m : all_methods()) out[m] = AgentConfig::preset(m);
  return out;
}

}  // namespace

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  c.agents = default_agents();
  if (name == "acrobot_paper") {
    c.env = EnvKind::acrobot;
    c.episodes = 600;
    c.max_steps = 500;
    c.schedule = default_schedule(EnvKind::acrobot);
  } else if (name == "mountaincar_paper") {
    c.env = EnvKind::mountaincar;
    c.episodes = 600;
    c.max_steps = 200;
    c.schedule = default_schedule(EnvKind::mountaincar);
  } else if (name == "smoke") {
    c.env = EnvKind::acrobot;
    c.episodes = 40;
    c.max_steps = 200;
    c.seeds = {0, 1};
    c.final_window = 10;
    c.smoothing_window = 5;
    c.schedule = DriftSchedule({{20, DriftKind::gravity, default_drift_factors(EnvKind::acrobot, DriftKind::gravity)}});
    for (auto& [m, a] : c.agents) {
      a.hidden = {32, 32};
      a.learn_start_steps = 200;
      a.epsilon.decay_steps = 3000;
      if (m == Method::sliding_dqn) a.buffer_capacity = 1000;
    }
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  c.output_dir = "results/" + name;
  return c;
}

std::vector<std::string> preset_names() { return {"acrobot_paper", "mountaincar_paper", "smoke"}; }

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig c;
  c.agents = default_agents();
  std::map<Method, std::vector<std::pair<std::string, std::string>>> method_overrides;
  std::vector<std::pair<std::string, std::string>> shared_overrides;
  std::vector<DriftEvent> events;
  bool schedule_given = false;

  std::string section;
  std::string raw;
  int line_no = 0;
  auto fail = [&](const std::string& msg) -> ConfigError {
    return ConfigError("line " + std::to_string(line_no) + ": " + msg);
  };

  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw fail("unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section == "drift") schedule_given = true;
      if (section != "experiment" && section != "drift" && section != "agent" && !section.starts_with("agent."))
        throw fail("unknown section [" + section + "]");
      if (section.starts_with("agent.")) {
        try {
          method_from_string(section.substr(6));
        } catch (const std::exception& e) {
          throw fail(e.what());
        }
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw fail("expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw fail("empty key");
    if (section.empty()) throw fail("setting '" + key + "' outside of any section");

    try {
      if (section == "experiment") {
        if (key == "name") c.name = value;
        else if (key == "env") c.env = env_kind_from_string(value);
        else if (key == "episodes") c.episodes = static_cast<int>(parse_int(value));
        else if (key == "max_steps") c.max_steps = static_cast<int>(parse_int(value));
        else if (key == "final_window") c.final_window = static_cast<int>(parse_int(value));
        else if (key == "smoothing_window") c.smoothing_window = static_cast<int>(parse_int(value));
        else if (key == "output_dir") c.output_dir = value;
        else if (key == "seeds") {
          c.seeds.clear();
          for (const std::string& s : split(value, ',')) c.seeds.push_back(static_cast<std::uint64_t>(parse_int(s)));
        } else if (key == "methods") {
          c.methods.clear();
          for (const std::string& s : split(value, ',')) c.methods.push_back(method_from_string(s));
        } else {
          throw std::invalid_argument("unknown experiment setting '" + key + "'");
        }
      } else if (section == "drift") {
        if (key != "event") throw std::invalid_argument("drift section accepts only 'event = <episode> <kind> [name=factor ...]'");
        const auto parts = words(value);
        if (parts.size() < 2) throw std::invalid_argument("drift event needs an episode and a kind");
        DriftEvent e;
        e.episode = static_cast<int>(parse_int(parts[0]));
        e.kind = drift_kind_from_string(parts[1]);
        for (std::size_t i = 2; i < parts.size(); ++i) {
          const auto kv = split(parts[i], '=');
          if (kv.size() != 2) throw std::invalid_argument("drift factor must be name=value, got '" + parts[i] + "'");
          const double f = parse_double(kv[1]);
          if (!(f > 0)) throw std::invalid_argument("drift factor for '" + kv[0] + "' must be > 0");
          e.factors[kv[0]] = f;
        }
        if (!events.empty() && e.episode <= events.back().episode)
          throw std::invalid_argument("drift episodes must be strictly increasing");
        events.push_back(std::move(e));
      } else {
        AgentConfig probe;
        apply_agent_setting(probe, key, value);
        probe.validate();
        if (section == "agent") shared_overrides.emplace_back(key, value);
        else method_overrides[method_from_string(section.substr(6))].emplace_back(key, value);
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw fail(e.what());
    }
  }

  for (auto& [m, agent] : c.agents) {
    for (const auto& [k, v] : shared_overrides) apply_agent_setting(agent, k, v);
    for (const auto& [k, v] : method_overrides[m]) apply_agent_setting(agent, k, v);
    agent.method = m;
  }
  if (schedule_given) {
    // Drift events without explicit factors get the environment defaults.
    for (DriftEvent& e : events)
      if (e.factors.empty() && e.kind != DriftKind::reset) {
        try {
          e.factors = default_drift_factors(c.env, e.kind);
        } catch (const std::exception& ex) {
          throw ConfigError(std::string("drift at episode ") + std::to_string(e.episode) + ": " + ex.what());
        }
      }
    c.schedule = DriftSchedule(std::move(events));
  }
  c.validate();
  return c;
}

ExperimentConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  try {
    return parse_config(in);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_config(std::ostream& out, const ExperimentConfig& c) {
  out << "[experiment]\n";
  out << "name = " << c.name << '\n';
  out << "env = " << to_string(c.env) << '\n';
  out << "episodes = " << c.episodes << '\n';
  out << "max_steps = " << c.max_steps << '\n';
  out << "seeds = " << join(c.seeds, [](std::uint64_t s) { return std::to_string(s); }) << '\n';
  out << "methods = " << join(c.methods, [](Method m) { return to_string(m); }) << '\n';
  out << "final_window = " << c.final_window << '\n';
  out << "smoothing_window = " << c.smoothing_window << '\n';
  out << "output_dir = " << c.output_dir << '\n';
  out << "\n[drift]\n";
  for (const DriftEvent& e : c.schedule.events()) {
    out << "event = " << e.episode << ' ' << to_string(e.kind);
    for (const auto& [name, f] : e.factors) out << ' ' << name << '=' << fmt(f);
    out << '\n';
  }
  for (Method m : all_methods()) {
    const auto it = c.agents.find(m);
    if (it == c.agents.end()) continue;
    out << "\n[agent." << to_string(m) << "]\n";
    for (const auto& [k, v] : agent_settings(it->second)) out << k << " = " << v << '\n';
  }
}

// CSV ----------------------------------------------------------------------------

void write_records_csv(std::ostream& out, const std::vector<RunRecord>& records) {
  out << kRecordHeader << '\n';
  for (const RunRecord& r : records) {
    out << r.seed << ',' << to_string(r.method) << ',' << to_string(r.env) << ',' << r.episode << ',' << fmt(r.ret)
        << ',' << r.steps << ',' << fmt(r.epsilon) << ',' << r.ensemble_size << ',' << r.drift_kind << '\n';
  }
}

std::vector<RunRecord> read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != kRecordHeader)
    throw std::runtime_error("run CSV: unexpected header");
  std::vector<RunRecord> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 9) throw std::runtime_error("run CSV line " + std::to_string(line_no) + ": expected 9 fields");
    RunRecord r;
    try {
      r.seed = static_cast<std::uint64_t>(parse_int(f[0]));
      r.method = method_from_string(f[1]);
      r.env = env_kind_from_string(f[2]);
      r.episode = static_cast<int>(parse_int(f[3]));
      r.ret = parse_double(f[4]);
      r.steps = static_cast<int>(parse_int(f[5]));
      r.epsilon = parse_double(f[6]);
      r.ensemble_size = static_cast<int>(parse_int(f[7]));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("run CSV line " + std::to_string(line_no) + ": " + e.what());
    }
    r.drift_kind = f[8];
    out.push_back(std::move(r));
  }
  return out;
}

std::string record_file_name(EnvKind env, Method method, std::uint64_t seed) {
  return to_string(env) + "_" + to_string(method) + "_seed" + std::to_string(seed) + ".csv";
}

std::vector<RunRecord> read_records_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.ends_with(".csv") && name.find("_seed") != std::string::npos)
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RunRecord> out;
  for (const auto& path : files) {
    std::ifstream in(path);
    auto recs = read_records_csv(in);
    out.insert(out.end(), recs.begin(), recs.end());
  }
  if (out.empty()) throw std::runtime_error("no run CSV files in " + dir.string());
  return out;
}

// Statistics -------------------------------------------------------------------------

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records, int final_window) {
  if (records.empty()) throw std::invalid_argument("summarize: no records");
  if (final_window < 1) throw std::invalid_argument("summarize: window must be >= 1");

  std::map<std::tuple<EnvKind, Method, std::uint64_t>, std::vector<const RunRecord*>> runs;
  for (const RunRecord& r : records) runs[{r.env, r.method, r.seed}].push_back(&r);

  std::map<std::pair<EnvKind, Method>, std::vector<double>> seed_means;
  for (auto& [key, recs] : runs) {
    std::sort(recs.begin(), recs.end(), [](auto* a, auto* b) { return a->episode < b->episode; });
    if (static_cast<int>(recs.size()) < final_window)
      throw std::invalid_argument("summarize: window " + std::to_string(final_window) + " exceeds the " +
                                  std::to_string(recs.size()) + " recorded episodes");
    double sum = 0.0;
    for (auto it = recs.end() - final_window; it != recs.end(); ++it) sum += (*it)->ret;
    seed_means[{std::get<0>(key), std::get<1>(key)}].push_back(sum / final_window);
  }

  std::vector<SummaryRow> rows;
  for (EnvKind env : {EnvKind::acrobot, EnvKind::mountaincar, EnvKind::cartpole}) {
    for (Method m : all_methods()) {
      const auto it = seed_means.find({env, m});
      if (it == seed_means.end()) continue;
      const std::vector<double>& xs = it->second;
      const double n = static_cast<double>(xs.size());
      const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
      double ss = 0.0;
      for (double x : xs) ss += (x - mean) * (x - mean);
      rows.push_back({m, env, mean, xs.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0, static_cast<int>(xs.size()),
                      final_window});
    }
  }
  return rows;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "method,mean,std,n_seeds,window\n";
  for (const SummaryRow& r : rows)
    out << to_string(r.method) << ',' << fmt(r.mean) << ',' << fmt(r.std) << ',' << r.n_seeds << ',' << r.window
        << '\n';
}

std::vector<double> moving_average(const std::vector<double>& values, int window) {
  if (window < 1) throw std::invalid_argument("moving_average: window must be >= 1");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t n = std::min<std::size_t>(i + 1, static_cast<std::size_t>(window));
    double sum = 0.0;
    for (std::size_t j = i + 1 - n; j <= i; ++j) sum += values[j];
    out[i] = sum / static_cast<double>(n);
  }
  return out;
}

std::vector<Curve> learning_curves(const std::vector<RunRecord>& records, EnvKind env, int smoothing_window) {
  std::map<Method, std::map<int, std::pair<double, int>>> acc;
  for (const RunRecord& r : records) {
    if (r.env != env) continue;
    auto& cell = acc[r.method][r.episode];
    cell.first += r.ret;
    cell.second += 1;
  }
  std::vector<Curve> curves;
  for (Method m : all_methods()) {
    const auto it = acc.find(m);
    if (it == acc.end()) continue;
    Curve c;
    c.method = m;
    std::vector<double> raw;
    for (const auto& [episode, cell] : it->second) {
      c.episodes.push_back(episode);
      raw.push_back(cell.first / cell.second);
    }
    c.values = moving_average(raw, smoothing_window);
    curves.push_back(std::move(c));
  }
  return curves;
}

std::vector<int> drift_episodes(const std::vector<RunRecord>& records, EnvKind env) {
  std::set<int> eps;
  for (const RunRecord& r : records)
    if (r.env == env && r.drift_kind != "none") eps.insert(r.episode);
  return {eps.begin(), eps.end()};
}

void write_svg_plot(std::ostream& out, const std::vector<Curve>& curves, const std::vector<int>& drifts,
                    const std::string& title) {
  constexpr double width = 900, height = 480, left = 70, right = 170, top = 40, bottom = 50;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  double xmin = std::numeric_limits<double>::max(), xmax = std::numeric_limits<double>::lowest();
  double ymin = xmin, ymax = xmax;
  for (const Curve& c : curves)
    for (std::size_t i = 0; i < c.values.size(); ++i) {
      xmin = std::min(xmin, double(c.episodes[i]));
      xmax = std::max(xmax, double(c.episodes[i]));
      ymin = std::min(ymin, c.values[i]);
      ymax = std::max(ymax, c.values[i]);
    }
  if (xmin > xmax) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  const double pw = width - left - right, ph = height - top - bottom;
  auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return top + (ymax - y) / (ymax - ymin) * ph; };

  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << left + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\" font-family=\"sans-serif\">"
      << title << "</text>\n";
  out << "<rect class=\"frame\" x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double yv = ymin + (ymax - ymin) * k / 5.0, xv = xmin + (xmax - xmin) * k / 5.0;
    out << "<text x=\"" << left - 6 << "\" y=\"" << sy(yv) + 4
        << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << yv << "</text>\n";
    out << "<text x=\"" << sx(xv) << "\" y=\"" << top + ph + 16
        << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << std::setprecision(0) << xv
        << std::setprecision(2) << "</text>\n";
  }
  out << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10
      << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">Episode</text>\n";
  out << "<text x=\"18\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" "
      << "transform=\"rotate(-90 18 " << top + ph / 2 << ")\">Return</text>\n";
  for (int e : drifts)
    out << "<line class=\"drift\" x1=\"" << sx(e) << "\" y1=\"" << top << "\" x2=\"" << sx(e) << "\" y2=\""
        << top + ph << "\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>\n";
  for (std::size_t k = 0; k < curves.size(); ++k) {
    const Curve& c = curves[k];
    out << "<polyline class=\"curve\" data-method=\"" << to_string(c.method) << "\" fill=\"none\" stroke=\""
        << colors[k % 6] << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < c.values.size(); ++i) out << (i ? " " : "") << sx(c.episodes[i]) << ',' << sy(c.values[i]);
    out << "\"/>\n";
    const double ly = top + 16 + 20.0 * k;
    out << "<line x1=\"" << width - right + 12 << "\" y1=\"" << ly << "\" x2=\"" << width - right + 36 << "\" y2=\""
        << ly << "\" stroke=\"" << colors[k % 6] << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << width - right + 42 << "\" y=\"" << ly + 4
        << "\" font-size=\"12\" font-family=\"sans-serif\">" << to_string(c.method) << "</text>\n";
  }
  out << "</svg>\n";
  out << std::defaultfloat;
}

void write_curves_csv(std::ostream& out, const std::vector<Curve>& curves) {
  out << "episode";
  for (const Curve& c : curves) out << ',' << to_string(c.method);
  out << '\n';
  std::map<int, std::vector<std::string>> rows;
  for (std::size_t k = 0; k < curves.size(); ++k)
    for (std::size_t i = 0; i < curves[k].values.size(); ++i) {
      auto& row = rows[curves[k].episodes[i]];
      row.resize(curves.size());
      row[k] = fmt(curves[k].values[i]);
    }
  for (auto& [episode, row] : rows) {
    row.resize(curves.size());
    out << episode;
    for (const std::string& v : row) out << ',' << v;
    out << '\n';
  }
}

std::vector<std::filesystem::path> plot_records(const std::vector<RunRecord>& records,
                                                const std::filesystem::path& out, int smoothing_window) {
  if (records.empty()) throw std::invalid_argument("plot: no records");
  std::set<EnvKind> envs;
  for (const RunRecord& r : records) envs.insert(r.env);
  std::vector<std::filesystem::path> written;
  for (EnvKind env : envs) {
    std::filesystem::path path = out;
    if (envs.size() > 1)
      path = out.parent_path() / (out.stem().string() + "_" + to_string(env) + out.extension().string());
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto curves = learning_curves(records, env, smoothing_window);
    std::ofstream svg(path);
    if (!svg) throw std::runtime_error("cannot write " + path.string());
    write_svg_plot(svg, curves, drift_episodes(records, env), "Results of " + to_string(env));
    std::filesystem::path csv_path = path;
    csv_path.replace_extension(".csv");
    std::ofstream csv(csv_path);
    write_curves_csv(csv, curves);
    written.push_back(path);
  }
  return written;
}

// Orchestration ----------------------------------------------------------------

ExperimentResult run_experiment(const ExperimentConfig& config, unsigned workers, std::ostream* log) {
  config.validate();
  namespace fs = std::filesystem;
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);

  struct Job {
    Method method;
    std::uint64_t seed;
    std::vector<RunRecord> records;
    std::string checkpoint;
    std::exception_ptr error;
  };
  std::vector<Job> jobs;
  for (Method m : config.methods)
    for (std::uint64_t s : config.seeds) jobs.push_back({m, s, {}, {}, nullptr});

  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      Job& job = jobs[i];
      try {
        Trainer trainer(config.agent(job.method), config.env, config.max_steps, config.schedule, job.seed);
        job.records.reserve(static_cast<std::size_t>(config.episodes));
        for (int e = 0; e < config.episodes; ++e) job.records.push_back(trainer.run_episode());
        if (auto* gb = dynamic_cast<const GbdqnAgent*>(&trainer.agent())) {
          std::ostringstream ck;
          gb->ensemble().save(ck, config.name + " seed=" + std::to_string(job.seed));
          job.checkpoint = ck.str();
        }
        if (log) {
          std::lock_guard lock(log_mutex);
          double tail = 0;
          const int w = std::min<int>(config.final_window, static_cast<int>(job.records.size()));
          for (auto it = job.records.end() - w; it != job.records.end(); ++it) tail += it->ret;
          *log << to_string(config.env) << ' ' << to_string(job.method) << " seed " << job.seed
               << ": final-window mean " << tail / w << '\n';
        }
      } catch (...) {
        job.error = std::current_exception();
      }
    }
  };
  const unsigned n_workers =
      std::max(1u, std::min<unsigned>(workers ? workers : std::thread::hardware_concurrency(),
                                      static_cast<unsigned>(jobs.size())));
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
  }

  ExperimentResult result;
  for (Job& job : jobs) {
    if (job.error) std::rethrow_exception(job.error);
    const fs::path path = dir / record_file_name(config.env, job.method, job.seed);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_records_csv(out, job.records);
    result.files.push_back(path);
    if (!job.checkpoint.empty()) {
      const fs::path ck = dir / (to_string(config.env) + "_gbdqn_seed" + std::to_string(job.seed) + ".ens");
      std::ofstream(ck) << job.checkpoint;
      result.files.push_back(ck);
    }
    result.records.insert(result.records.end(), job.records.begin(), job.records.end());
  }
  result.summary = summarize(result.records, config.final_window);
  const fs::path summary = dir / "summary.csv";
  std::ofstream(summary) << [&] {
    std::ostringstream s;
    write_summary_csv(s, result.summary);
    return s.str();
  }();
  result.files.push_back(summary);
  std::ofstream(dir / "config.cfg") << [&] {
    std::ostringstream s;
    write_config(s, config);
    return s.str();
  }();
  return result;
}

}  // namespace gbdqn
