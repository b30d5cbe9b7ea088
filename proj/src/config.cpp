#include "pmcphd/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pmcphd/errors.hpp"

namespace pmcphd {

using nlohmann::json;

namespace {

std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& path) {
  if (!obj.is_object()) throw ConfigError((path.empty() ? "config" : path) + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + join_path(path, key) + "'");
  }
}

double get_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path + " must be a number");
  return v.get<double>();
}

template <typename Int>
Int get_integer(const json& v, const std::string& path, Int min_value) {
  if (!v.is_number_integer()) throw ConfigError(path + " must be an integer");
  if (v.is_number_unsigned()) {
    const auto u = v.get<std::uint64_t>();
    if (static_cast<long double>(u) < static_cast<long double>(min_value)) {
      throw ConfigError(path + " must be >= " + std::to_string(min_value));
    }
    return static_cast<Int>(u);
  }
  const auto i = v.get<std::int64_t>();
  if (i < static_cast<std::int64_t>(min_value)) throw ConfigError(path + " must be >= " + std::to_string(min_value));
  return static_cast<Int>(i);
}

Vector get_vector(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path + " must be an array of numbers");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = get_number(v[i], path);
  return out;
}

Matrix get_matrix(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty() || !v[0].is_array()) throw ConfigError(path + " must be an array of rows");
  const std::size_t cols = v[0].size();
  Matrix out(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < v.size(); ++r) {
    if (!v[r].is_array() || v[r].size() != cols) throw ConfigError(path + ": rows must have equal length");
    for (std::size_t c = 0; c < cols; ++c) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = get_number(v[r][c], path);
    }
  }
  return out;
}

json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json to_json(const Matrix& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(std::move(row));
  }
  return a;
}

json spec_to_json(const HmcSpec& s) {
  return json{{"F", to_json(s.F)},   {"Q", to_json(s.Q)},   {"H", to_json(s.H)},   {"R", to_json(s.R)},
              {"m0", to_json(s.m0)}, {"P0", to_json(s.P0)}, {"F2", to_json(s.F2)}, {"H2", to_json(s.H2)}};
}

void read_spec(const json& j, HmcSpec& s, const std::string& path) {
  reject_unknown(j, {"F", "Q", "H", "R", "m0", "P0", "F2", "H2"}, path);
  if (j.contains("F")) s.F = get_matrix(j["F"], path + ".F");
  if (j.contains("Q")) s.Q = get_matrix(j["Q"], path + ".Q");
  if (j.contains("H")) s.H = get_matrix(j["H"], path + ".H");
  if (j.contains("R")) s.R = get_matrix(j["R"], path + ".R");
  if (j.contains("m0")) s.m0 = get_vector(j["m0"], path + ".m0");
  if (j.contains("P0")) s.P0 = get_matrix(j["P0"], path + ".P0");
  if (j.contains("F2")) s.F2 = get_matrix(j["F2"], path + ".F2");
  if (j.contains("H2")) s.H2 = get_matrix(j["H2"], path + ".H2");
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("parse error at line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                      e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void read_scenario(const json& j, ScenarioConfig& s) {
  const std::string p = "scenario";
  reject_unknown(j, {"turn_rate", "T", "steps", "region", "clutter_rate", "p_D", "p_S", "targets", "model"}, p);
  bool dynamics_changed = false;
  if (j.contains("turn_rate")) {
    s.turn_rate = get_number(j["turn_rate"], p + ".turn_rate");
    dynamics_changed = true;
  }
  if (j.contains("T")) {
    s.period = get_number(j["T"], p + ".T");
    dynamics_changed = true;
  }
  if (j.contains("steps")) s.steps = get_integer<int>(j["steps"], p + ".steps", 1);
  if (j.contains("region")) {
    reject_unknown(j["region"], {"lower", "upper"}, p + ".region");
    if (j["region"].contains("lower")) s.region.lower = get_vector(j["region"]["lower"], p + ".region.lower");
    if (j["region"].contains("upper")) s.region.upper = get_vector(j["region"]["upper"], p + ".region.upper");
  }
  if (j.contains("clutter_rate")) s.clutter_rate = get_number(j["clutter_rate"], p + ".clutter_rate");
  if (j.contains("p_D")) s.p_detection = get_number(j["p_D"], p + ".p_D");
  if (j.contains("p_S")) s.p_survival = get_number(j["p_S"], p + ".p_S");
  if (dynamics_changed) s.model.F = coordinated_turn_matrix(s.turn_rate, s.period);
  if (j.contains("model")) read_spec(j["model"], s.model, p + ".model");
  if (j.contains("targets")) {
    const json& ts = j["targets"];
    if (!ts.is_array()) throw ConfigError(p + ".targets must be an array");
    s.targets.clear();
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const std::string tp = p + ".targets[" + std::to_string(i) + "]";
      reject_unknown(ts[i], {"id", "birth", "death", "m0", "P0"}, tp);
      TargetSchedule t;
      t.id = ts[i].contains("id") ? get_integer<int>(ts[i]["id"], tp + ".id", 0) : static_cast<int>(i + 1);
      t.birth_step = ts[i].contains("birth") ? get_integer<int>(ts[i]["birth"], tp + ".birth", 1) : 1;
      t.death_step = ts[i].contains("death") ? get_integer<int>(ts[i]["death"], tp + ".death", 1) : s.steps;
      if (!ts[i].contains("m0")) throw ConfigError(tp + ".m0 is required");
      t.m0 = get_vector(ts[i]["m0"], tp + ".m0");
      t.P0 = ts[i].contains("P0") ? get_matrix(ts[i]["P0"], tp + ".P0") : s.model.P0;
      s.targets.push_back(std::move(t));
    }
  }
}

void read_filter(const json& j, FilterSettings& f) {
  const std::string p = "filter";
  reject_unknown(j, {"particles_per_target", "birth_particles", "resampling", "likelihood", "birth_placement", "proposal",
                     "proposal_prior_fraction", "birth"},
                 p);
  if (j.contains("particles_per_target")) {
    f.particles_per_target = get_integer<std::size_t>(j["particles_per_target"], p + ".particles_per_target", 1);
  }
  if (j.contains("birth_particles")) {
    f.birth_particles = get_integer<std::size_t>(j["birth_particles"], p + ".birth_particles", 1);
  }
  if (j.contains("resampling")) {
    const auto v = j["resampling"].get<std::string>();
    if (v == "systematic") {
      f.resampling = ResamplingScheme::Systematic;
    } else if (v == "multinomial") {
      f.resampling = ResamplingScheme::Multinomial;
    } else {
      throw ConfigError(p + ".resampling must be 'systematic' or 'multinomial'");
    }
  }
  if (j.contains("likelihood")) {
    const auto v = j["likelihood"].get<std::string>();
    if (v == "conditional") {
      f.likelihood = LikelihoodMode::Conditional;
    } else if (v == "predictive") {
      f.likelihood = LikelihoodMode::Predictive;
    } else {
      throw ConfigError(p + ".likelihood must be 'conditional' or 'predictive'");
    }
  }
  if (j.contains("birth_placement")) {
    const auto v = j["birth_placement"].get<std::string>();
    if (v == "prior") {
      f.birth_placement = BirthPlacement::Prior;
    } else if (v == "measurement") {
      f.birth_placement = BirthPlacement::MeasurementDriven;
    } else {
      throw ConfigError(p + ".birth_placement must be 'prior' or 'measurement'");
    }
  }
  if (j.contains("proposal")) {
    const auto v = j["proposal"].get<std::string>();
    if (v == "prior") {
      f.proposal = ProposalKind::Prior;
    } else if (v == "measurement") {
      f.proposal = ProposalKind::MeasurementMixture;
    } else {
      throw ConfigError(p + ".proposal must be 'prior' or 'measurement'");
    }
  }
  if (j.contains("proposal_prior_fraction")) {
    f.proposal_prior_fraction = get_number(j["proposal_prior_fraction"], p + ".proposal_prior_fraction");
  }
  if (j.contains("birth")) {
    const json& b = j["birth"];
    const std::string bp = p + ".birth";
    reject_unknown(b, {"from_schedule", "mass_per_target", "cov_scale", "components"}, bp);
    if (b.contains("from_schedule")) {
      if (!b["from_schedule"].is_boolean()) throw ConfigError(bp + ".from_schedule must be true or false");
      f.birth.from_schedule = b["from_schedule"].get<bool>();
    }
    if (b.contains("mass_per_target")) f.birth.mass_per_target = get_number(b["mass_per_target"], bp + ".mass_per_target");
    if (b.contains("cov_scale")) f.birth.cov_scale = get_number(b["cov_scale"], bp + ".cov_scale");
    if (b.contains("components")) {
      f.birth.components.clear();
      const json& cs = b["components"];
      if (!cs.is_array()) throw ConfigError(bp + ".components must be an array");
      for (std::size_t i = 0; i < cs.size(); ++i) {
        const std::string cp = bp + ".components[" + std::to_string(i) + "]";
        reject_unknown(cs[i], {"mass", "mean", "cov"}, cp);
        if (!cs[i].contains("mass") || !cs[i].contains("mean") || !cs[i].contains("cov")) {
          throw ConfigError(cp + " needs mass, mean and cov");
        }
        BirthComponent c;
        c.mass = get_number(cs[i]["mass"], cp + ".mass");
        c.law.mean = get_vector(cs[i]["mean"], cp + ".mean");
        c.law.cov = get_matrix(cs[i]["cov"], cp + ".cov");
        f.birth.components.push_back(std::move(c));
      }
    }
  }
}

const char* name_of(ResamplingScheme s) { return s == ResamplingScheme::Systematic ? "systematic" : "multinomial"; }
const char* name_of(LikelihoodMode m) { return m == LikelihoodMode::Conditional ? "conditional" : "predictive"; }
const char* name_of(BirthPlacement b) { return b == BirthPlacement::Prior ? "prior" : "measurement"; }
const char* name_of(ProposalKind k) { return k == ProposalKind::Prior ? "prior" : "measurement"; }

}  // namespace

std::string serialize_hmc_spec(const HmcSpec& spec) { return spec_to_json(spec).dump(2); }

HmcSpec parse_hmc_spec(const std::string& text) {
  const json j = parse_json(text);
  HmcSpec s;
  read_spec(j, s, "model");
  for (const char* key : {"F", "Q", "H", "R", "m0", "P0", "F2", "H2"}) {
    if (!j.contains(key)) throw ConfigError(std::string("model.") + key + " is required");
  }
  s.check_dimensions();
  return s;
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  const json j = parse_json(text);
  ExperimentConfig cfg;
  try {
    reject_unknown(j, {"scenario", "filter", "ospa", "runs", "seed", "filters", "output_dir", "threads"}, "");
    if (j.contains("scenario")) read_scenario(j["scenario"], cfg.scenario);
    if (j.contains("filter")) read_filter(j["filter"], cfg.filter);
    if (j.contains("ospa")) {
      reject_unknown(j["ospa"], {"cutoff", "order"}, "ospa");
      if (j["ospa"].contains("cutoff")) cfg.ospa.cutoff = get_number(j["ospa"]["cutoff"], "ospa.cutoff");
      if (j["ospa"].contains("order")) cfg.ospa.order = get_number(j["ospa"]["order"], "ospa.order");
    }
    if (j.contains("runs")) cfg.runs = get_integer<int>(j["runs"], "runs", 1);
    if (j.contains("seed")) cfg.seed = get_integer<std::uint64_t>(j["seed"], "seed", 0);
    if (j.contains("threads")) cfg.threads = get_integer<unsigned>(j["threads"], "threads", 0);
    if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
    if (j.contains("filters")) {
      if (!j["filters"].is_array()) throw ConfigError("filters must be an array");
      cfg.filters.clear();
      for (const auto& f : j["filters"]) cfg.filters.push_back(f.get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) { return parse_experiment_config(read_file(path)); }

std::string serialize_experiment_config(const ExperimentConfig& cfg) {
  const ScenarioConfig& s = cfg.scenario;
  json targets = json::array();
  for (const auto& t : s.targets) {
    targets.push_back({{"id", t.id}, {"birth", t.birth_step}, {"death", t.death_step}, {"m0", to_json(t.m0)},
                       {"P0", to_json(t.P0)}});
  }
  json components = json::array();
  for (const auto& c : cfg.filter.birth.components) {
    components.push_back({{"mass", c.mass}, {"mean", to_json(c.law.mean)}, {"cov", to_json(c.law.cov)}});
  }
  json j{
      {"runs", cfg.runs},
      {"seed", cfg.seed},
      {"filters", cfg.filters},
      {"output_dir", cfg.output_dir},
      {"threads", cfg.threads},
      {"ospa", {{"cutoff", cfg.ospa.cutoff}, {"order", cfg.ospa.order}}},
      {"scenario",
       {{"turn_rate", s.turn_rate},
        {"T", s.period},
        {"steps", s.steps},
        {"region", {{"lower", to_json(s.region.lower)}, {"upper", to_json(s.region.upper)}}},
        {"clutter_rate", s.clutter_rate},
        {"p_D", s.p_detection},
        {"p_S", s.p_survival},
        {"targets", targets},
        {"model", spec_to_json(s.model)}}},
      {"filter",
       {{"particles_per_target", cfg.filter.particles_per_target},
        {"birth_particles", cfg.filter.birth_particles},
        {"resampling", name_of(cfg.filter.resampling)},
        {"likelihood", name_of(cfg.filter.likelihood)},
        {"birth_placement", name_of(cfg.filter.birth_placement)},
        {"proposal", name_of(cfg.filter.proposal)},
        {"proposal_prior_fraction", cfg.filter.proposal_prior_fraction},
        {"birth",
         {{"from_schedule", cfg.filter.birth.from_schedule},
          {"mass_per_target", cfg.filter.birth.mass_per_target},
          {"cov_scale", cfg.filter.birth.cov_scale},
          {"components", components}}}}},
  };
  return j.dump(2);
}

ConfigDiagnostics validate_config_file(const std::string& path) {
  ConfigDiagnostics d;
  std::ostringstream os;
  try {
    const ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : load_experiment_config(path);
    cfg.validate();
    const GaussianPmcModel model = embed_hmc(cfg.scenario.model);
    const ModelDiagnostics md = validate_model(model);
    os << "embedded model diagnostics:\n" << md.to_string();
    const FilterParams fp = make_filter_params(cfg);
    os << "effective parameters:\n"
       << "  steps " << cfg.scenario.steps << ", T " << cfg.scenario.period << ", turn_rate "
       << cfg.scenario.turn_rate << "\n"
       << "  p_S " << fp.p_survival << ", p_D " << fp.p_detection << ", clutter_rate " << fp.clutter_rate
       << ", region volume " << fp.region_volume << ", kappa " << fp.clutter_intensity() << "\n"
       << "  particles_per_target " << fp.particles_per_target << ", birth_particles " << fp.birth_particles
       << ", birth components " << fp.birth.components.size() << " (total mass " << fp.birth.total_mass() << ")\n"
       << "  likelihood " << name_of(fp.likelihood) << ", resampling " << name_of(fp.resampling)
       << ", birth placement " << name_of(fp.birth_placement) << ", proposal " << name_of(cfg.filter.proposal)
       << "\n"
       << "  ospa cutoff " << cfg.ospa.cutoff << ", order " << cfg.ospa.order << "\n"
       << "  runs " << cfg.runs << ", seed " << cfg.seed << ", targets " << cfg.scenario.targets.size() << "\n";
    d.valid = md.ok();
  } catch (const InvalidEmbeddingError& e) {
    os << "invalid embedding (" << e.block() << "): " << e.what() << "\n";
    d.valid = false;
  } catch (const Error& e) {
    os << "invalid config: " << e.what() << "\n";
    d.valid = false;
  }
  d.report = os.str();
  return d;
}

}  // namespace pmcphd
