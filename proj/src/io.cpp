#include "dopa/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "dopa/errors.hpp"

namespace dopa {

using nlohmann::json;

namespace {

json phy_to_json(const PhyConfig& p) {
  return json{{"n_tx", p.n_tx},
              {"n_rx", p.n_rx},
              {"n_streams", p.n_streams},
              {"target_ser", p.target_ser},
              {"kappa1", p.kappa1},
              {"sigma_e2", p.sigma_e2},
              {"rng_seed", p.rng_seed},
              {"unscaled_regularizer", p.unscaled_regularizer}};
}

PhyConfig phy_from_json(const json& j) {
  PhyConfig p;
  p.n_tx = j.value("n_tx", p.n_tx);
  p.n_rx = j.value("n_rx", p.n_rx);
  p.n_streams = j.value("n_streams", p.n_streams);
  p.target_ser = j.value("target_ser", p.target_ser);
  p.kappa1 = j.value("kappa1", p.kappa1);
  p.sigma_e2 = j.value("sigma_e2", p.sigma_e2);
  p.rng_seed = j.value("rng_seed", p.rng_seed);
  p.unscaled_regularizer = j.value("unscaled_regularizer", p.unscaled_regularizer);
  return p;
}

json streams_to_json(const std::vector<StreamProfile>& streams) {
  json arr = json::array();
  for (const auto& s : streams) arr.push_back(json{{"beta", s.beta}, {"lambda", s.lambda}, {"nbar", s.nbar}});
  return arr;
}

std::vector<StreamProfile> streams_from_json(const json& arr) {
  std::vector<StreamProfile> out;
  for (const auto& j : arr) {
    StreamProfile s;
    s.beta = j.value("beta", s.beta);
    s.lambda = j.value("lambda", s.lambda);
    s.nbar = j.value("nbar", s.nbar);
    out.push_back(s);
  }
  return out;
}

}  // namespace

ChainParams RunConfig::chain(double gamma_value) const {
  ChainParams c;
  c.tau = tau;
  c.gamma = gamma_value;
  c.buffer = buffer;
  c.streams = streams;
  return c;
}

void RunConfig::validate() const {
  phy.validate();
  if (gamma.has_value() == p0.has_value())
    throw config_error("RunConfig: exactly one of gamma / p0 must be given");
  if (gamma && !(*gamma > 0.0)) throw config_error("RunConfig: gamma must be positive");
  if (p0 && !(*p0 > 0.0)) throw config_error("RunConfig: p0 must be positive");
  if (mode != "full" && mode != "decomposed" && mode != "both")
    throw config_error("RunConfig: mode must be full, decomposed or both");
  if (calib != "rootfind" && calib != "sweep")
    throw config_error("RunConfig: calib must be rootfind or sweep");
  if (cache_rows < 1) throw config_error("RunConfig: cache_rows must be positive");
  if (slots < 1) throw config_error("RunConfig: slots must be positive");
  if (seeds.empty()) throw config_error("RunConfig: need at least one seed");
  if (static_cast<int>(streams.size()) != phy.n_streams)
    throw config_error("RunConfig: stream list length must equal phy.n_streams");
  chain(gamma.value_or(1.0)).validate();
}

std::string dump_config(const RunConfig& c) {
  json j{{"scenario", c.scenario},
         {"phy", phy_to_json(c.phy)},
         {"tau", c.tau},
         {"streams", streams_to_json(c.streams)},
         {"buffer", c.buffer},
         {"mode", c.mode},
         {"cache_rows", c.cache_rows},
         {"cache_seed", c.cache_seed},
         {"slots", c.slots},
         {"seeds", c.seeds},
         {"out", c.out_dir},
         {"state_cap", c.state_cap},
         {"calib", c.calib},
         {"calib_points", c.calib_points},
         {"gamma_lo", c.gamma_lo},
         {"gamma_hi", c.gamma_hi}};
  if (c.gamma) j["gamma"] = *c.gamma;
  if (c.p0) j["p0"] = *c.p0;
  return j.dump();
}

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw config_error(std::string("config parse error: ") + e.what());
  }
  RunConfig c;
  c.scenario = j.value("scenario", c.scenario);
  if (j.contains("phy")) c.phy = phy_from_json(j["phy"]);
  c.tau = j.value("tau", c.tau);
  if (j.contains("streams")) c.streams = streams_from_json(j["streams"]);
  c.buffer = j.value("buffer", c.buffer);
  if (j.contains("gamma")) c.gamma = j["gamma"].get<double>();
  if (j.contains("p0")) c.p0 = j["p0"].get<double>();
  c.mode = j.value("mode", c.mode);
  c.cache_rows = j.value("cache_rows", c.cache_rows);
  c.cache_seed = j.value("cache_seed", c.cache_seed);
  c.slots = j.value("slots", c.slots);
  if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  c.out_dir = j.value("out", c.out_dir);
  c.state_cap = j.value("state_cap", c.state_cap);
  c.calib = j.value("calib", c.calib);
  c.calib_points = j.value("calib_points", c.calib_points);
  c.gamma_lo = j.value("gamma_lo", c.gamma_lo);
  c.gamma_hi = j.value("gamma_hi", c.gamma_hi);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_hash(const RunConfig& cfg) {
  const std::string dump = dump_config(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::filesystem::path cache_dir(const RunConfig& cfg) {
  if (const char* env = std::getenv("DOPA_CACHE_DIR"); env && *env) return env;
  return cfg.out_dir;
}

EigenSampleCache load_or_generate_cache(const RunConfig& cfg) {
  return load_or_generate_cache(cfg, cfg.phy);
}

EigenSampleCache load_or_generate_cache(const RunConfig& cfg, const PhyConfig& phy) {
  RunConfig keyed = cfg;
  keyed.phy = phy;
  // The cache depends only on the PHY model and its own shape.
  char key[128];
  std::snprintf(key, sizeof(key), "%d_%d_%d_%.9g_%d_%zu_%llu", phy.n_tx, phy.n_rx, phy.n_streams,
                phy.sigma_e2, phy.unscaled_regularizer ? 1 : 0, cfg.cache_rows,
                static_cast<unsigned long long>(cfg.cache_seed));
  const std::filesystem::path dir = cache_dir(cfg);
  std::filesystem::create_directories(dir);
  const std::filesystem::path path = dir / (std::string("eigcache_") + key + ".csv");
  if (std::filesystem::exists(path)) return EigenSampleCache::load_csv(path);
  EigenSampleCache cache = EigenSampleCache::generate(phy, cfg.cache_rows, cfg.cache_seed);
  cache.save_csv(path);
  return cache;
}

namespace {

json chain_to_json(const ChainParams& params) {
  return json{{"tau", params.tau},
              {"gamma", params.gamma},
              {"buffer", params.buffer},
              {"streams", streams_to_json(params.streams)}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot open " + path.string() + " for writing");
  out << text;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw config_error("malformed solution file " + path.string() + ": " + e.what());
  }
  return j;
}

}  // namespace

void save_full_solution(const FullSolution& sol, const std::string& cfg_hash,
                        const std::filesystem::path& path) {
  json j{{"format", "dopa-solution-v1"},
         {"mode", "full"},
         {"config_hash", cfg_hash},
         {"gamma", sol.gamma},
         {"tau", sol.tau},
         {"buffer", sol.buffer},
         {"n_streams", sol.n_streams},
         {"theta", sol.theta},
         {"converged", sol.converged},
         {"iterations", sol.iterations},
         {"span_residual", sol.span_residual},
         {"v", sol.v},
         {"delta_v", sol.delta_v}};
  write_text(path, j.dump());
}

FullSolution load_full_solution(const std::filesystem::path& path) {
  const json j = read_json(path);
  if (j.value("format", "") != "dopa-solution-v1" || j.value("mode", "") != "full")
    throw config_error("not a full-mode solution file: " + path.string());
  FullSolution sol;
  sol.gamma = j.at("gamma").get<double>();
  sol.tau = j.at("tau").get<double>();
  sol.buffer = j.at("buffer").get<int>();
  sol.n_streams = j.at("n_streams").get<int>();
  sol.theta = j.at("theta").get<double>();
  sol.converged = j.at("converged").get<bool>();
  sol.iterations = j.at("iterations").get<int>();
  sol.span_residual = j.at("span_residual").get<double>();
  sol.v = j.at("v").get<std::vector<double>>();
  sol.delta_v = j.at("delta_v").get<std::vector<double>>();
  return sol;
}

void save_stream_solutions(const std::vector<StreamSolution>& sols, const ChainParams& params,
                           const std::string& cfg_hash, const std::filesystem::path& path) {
  json arr = json::array();
  for (const auto& s : sols)
    arr.push_back(json{{"stream", s.stream},
                       {"theta", s.theta},
                       {"gamma", s.gamma},
                       {"eig_rank", s.eig_rank},
                       {"residual", s.residual},
                       {"delta_v", s.delta_v}});
  json j{{"format", "dopa-solution-v1"},
         {"mode", "decomposed"},
         {"config_hash", cfg_hash},
         {"chain", chain_to_json(params)},
         {"per_stream", arr}};
  write_text(path, j.dump());
}

std::vector<StreamSolution> load_stream_solutions(const std::filesystem::path& path) {
  const json j = read_json(path);
  if (j.value("format", "") != "dopa-solution-v1" || j.value("mode", "") != "decomposed")
    throw config_error("not a decomposed-mode solution file: " + path.string());
  std::vector<StreamSolution> sols;
  for (const auto& js : j.at("per_stream")) {
    StreamSolution s;
    s.stream = js.at("stream").get<int>();
    s.theta = js.at("theta").get<double>();
    s.gamma = js.at("gamma").get<double>();
    s.eig_rank = js.at("eig_rank").get<int>();
    s.residual = js.at("residual").get<double>();
    s.delta_v = js.at("delta_v").get<std::vector<double>>();
    sols.push_back(std::move(s));
  }
  return sols;
}

void save_sim_report_json(const SimReport& rep, const std::string& cfg_hash,
                          const std::filesystem::path& path) {
  json j{{"format", "dopa-simreport-v1"},
         {"config_hash", cfg_hash},
         {"slots", rep.slots},
         {"seed", rep.seed},
         {"avg_power", rep.avg_power},
         {"weighted_delay", rep.weighted_delay},
         {"clamp_events", rep.clamp_events},
         {"drops", rep.drops},
         {"arrivals", rep.arrivals},
         {"hist_stream", rep.hist_stream}};
  std::vector<double> q(rep.avg_queue.data(), rep.avg_queue.data() + rep.avg_queue.size());
  j["avg_queue"] = q;
  if (!rep.hist_joint.empty()) j["hist_joint"] = rep.hist_joint;
  write_text(path, j.dump());
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::string& cfg_hash,
                     const std::vector<std::string>& columns)
    : out_(path), n_cols_(columns.size()) {
  if (!out_) throw config_error("cannot open " + path.string() + " for writing");
  out_ << "# dopa v" << kVersion << " config_hash=" << cfg_hash << "\n";
  for (std::size_t i = 0; i < columns.size(); ++i)
    out_ << columns[i] << (i + 1 < columns.size() ? "," : "\n");
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != n_cols_) throw config_error("CsvWriter: column count mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i)
    out_ << cells[i] << (i + 1 < cells.size() ? "," : "\n");
}

std::string CsvWriter::num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void save_sim_report_csv(const SimReport& rep, const std::string& cfg_hash,
                         const std::filesystem::path& path) {
  CsvWriter csv(path, cfg_hash,
                {"stream", "avg_queue", "avg_power_total", "weighted_delay", "drops", "arrivals",
                 "slots", "seed", "clamp_events"});
  for (Eigen::Index i = 0; i < rep.avg_queue.size(); ++i) {
    csv.row({std::to_string(i + 1), CsvWriter::num(rep.avg_queue(i)), CsvWriter::num(rep.avg_power),
             CsvWriter::num(rep.weighted_delay),
             std::to_string(rep.drops[static_cast<std::size_t>(i)]),
             std::to_string(rep.arrivals[static_cast<std::size_t>(i)]), std::to_string(rep.slots),
             std::to_string(rep.seed), std::to_string(rep.clamp_events)});
  }
}

void save_histogram_csv(const SimReport& rep, const SteadyState* analytic,
                        const std::string& cfg_hash, const std::filesystem::path& path) {
  CsvWriter csv(path, cfg_hash, {"stream", "queue", "count", "fraction", "analytic"});
  for (std::size_t i = 0; i < rep.hist_stream.size(); ++i)
    for (std::size_t q = 0; q < rep.hist_stream[i].size(); ++q) {
      const double frac =
          static_cast<double>(rep.hist_stream[i][q]) / static_cast<double>(rep.slots);
      const bool have_analytic = analytic && i < analytic->omega_streams.size() &&
                                 q < analytic->omega_streams[i].size();
      csv.row({std::to_string(i + 1), std::to_string(q), std::to_string(rep.hist_stream[i][q]),
               CsvWriter::num(frac),
               have_analytic ? CsvWriter::num(analytic->omega_streams[i][q]) : ""});
    }
}

void save_calibration_csv(const CalibrationResult& res, const std::string& cfg_hash,
                          const std::filesystem::path& path) {
  std::vector<std::string> cols = {"gamma", "p0", "theta", "failed"};
  Eigen::Index l = 0;
  for (const auto& pt : res.table)
    if (!pt.failed) {
      l = pt.avg_queue.size();
      break;
    }
  for (Eigen::Index i = 0; i < l; ++i) cols.push_back("avg_queue_" + std::to_string(i + 1));
  for (Eigen::Index i = 0; i < l; ++i) cols.push_back("drop_rate_" + std::to_string(i + 1));
  CsvWriter csv(path, cfg_hash, cols);
  for (const auto& pt : res.table) {
    std::vector<std::string> cells = {CsvWriter::num(pt.gamma), CsvWriter::num(pt.power),
                                      CsvWriter::num(pt.theta), pt.failed ? "1" : "0"};
    for (Eigen::Index i = 0; i < l; ++i)
      cells.push_back(pt.failed ? "" : CsvWriter::num(pt.avg_queue(i)));
    for (Eigen::Index i = 0; i < l; ++i)
      cells.push_back(pt.failed ? "" : CsvWriter::num(pt.drop_rate(i)));
    csv.row(cells);
  }
}

}  // namespace dopa
