// nsgp: command-line surface over the library. Exit codes: 0 success, 1 certificate or
// invariant failure (a witness file is written), 2 bad input.
#include "nsgp/lab.hpp"
#include "nsgp/report.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

using namespace nsgp;
namespace fs = std::filesystem;

namespace {

// Flat JSON objects as config files; nested objects address subcommand options.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      input >> j;
    } catch (const nlohmann::json::parse_error& e) {
      throw CLI::ConversionError(std::string("config: ") + e.what());
    }
    std::vector<CLI::ConfigItem> items;
    collect(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void collect(const nlohmann::json& j, std::vector<std::string> parents, std::vector<CLI::ConfigItem>& out) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.value().is_object()) {
        auto p = parents;
        p.push_back(it.key());
        collect(it.value(), p, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = it.key();
      if (it.value().is_array())
        for (const auto& e : it.value()) item.inputs.push_back(scalar(e));
      else
        item.inputs.push_back(scalar(it.value()));
      out.push_back(std::move(item));
    }
  }
};

struct Common {
  std::string map = "example";
  std::size_t m_max = 0;
  std::string out = "nsgp_out";
  unsigned threads = 1;
  std::uint64_t seed = 0;
};

std::string q_text(const Q& q) { return num_str(q) + "/" + den_str(q); }

struct Failure {
  std::string what;
  nlohmann::json witness;
};

void add_common(CLI::App* sub, Common& c, std::size_t default_m_max) {
  c.m_max = default_m_max;
  sub->add_option("--map", c.map, "\"example\", \"thaler:<d>:<kappa>\" or a map JSON file")->capture_default_str();
  sub->add_option("--m-max", c.m_max, "Stored return levels per fixed point")->capture_default_str()->check(
      CLI::Range(std::size_t(2), std::size_t(1000000)));
  sub->add_option("--out", c.out, "Output directory")->capture_default_str();
  sub->add_option("--threads", c.threads, "Worker cap")->capture_default_str()->check(CLI::Range(1u, 256u));
  sub->add_option("--seed", c.seed, "Seed for every random choice")->capture_default_str();
}

InducedScheme scheme_for(const Common& c) {
  auto t0 = std::chrono::steady_clock::now();
  auto s = build_scheme(load_map(c.map), c.m_max);
  double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log_line("info", "scheme m_max=" + std::to_string(c.m_max) + " symbols=" + std::to_string(s.symbols.size()) +
                       " seconds=" + std::to_string(dt));
  return s;
}

std::vector<double> parse_doubles(const std::string& csv) {
  std::vector<double> v;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) v.push_back(std::stod(item));
  if (v.empty()) throw std::invalid_argument("empty number list");
  return v;
}

// "a,b,c" is a point; "a,b,c;d,e,f;..." a polyline.
TargetSpec parse_target(const std::string& text) {
  std::vector<QVec> verts;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ';')) verts.push_back(parse_rational_list(part));
  if (verts.empty()) throw std::invalid_argument("empty target");
  return verts.size() == 1 ? TargetSpec::single(verts[0]) : TargetSpec::polyline(verts);
}

// ---------------------------------------------------------------- describe-map

int cmd_describe(const Common& c) {
  auto map = load_map(c.map);
  auto rep = validate_assumptions(map);
  nlohmann::json branches = nlohmann::json::array();
  for (const auto& b : rep.branches)
    branches.push_back({{"min_deriv_away", b.min_deriv_away},
                        {"distortion", b.distortion},
                        {"distortion_refined", b.distortion_refined},
                        {"left_image", b.left_image},
                        {"right_image", b.right_image},
                        {"expanding", b.expanding},
                        {"distortion_stable", b.distortion_stable},
                        {"full_branch", b.full_branch}});
  nlohmann::json j = {{"map", map_to_json(map)},
                      {"assumptions",
                       {{"branches", branches},
                        {"fixed_point_deriv", rep.fixed_point_deriv},
                        {"fixed_points_neutral", rep.fixed_points_neutral},
                        {"pass", rep.pass}}}};
  write_json(fs::path(c.out) / "map.json", j);
  if (!rep.pass) throw Failure{"map violates the standing assumptions", j["assumptions"]};
  log_line("info", "assumptions hold");
  return 0;
}

// ---------------------------------------------------------------- induce

int cmd_induce(const Common& c) {
  auto s = scheme_for(c);
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& y : s.y) comps.push_back({{"lo", y.iv.lo}, {"hi", y.iv.hi}, {"branch", y.branch}, {"big", y.big}});
  nlohmann::json xr = nlohmann::json::array();
  for (const auto& x : s.x_regions) xr.push_back({x.lo, x.hi});
  nlohmann::json j = {{"m_max", s.m_max},
                      {"components", comps},
                      {"big_images", s.big_images},
                      {"x_regions", xr},
                      {"symbols", s.symbols.size()},
                      {"untracked_mass", s.untracked_mass},
                      {"total_untracked", s.total_untracked()}};
  write_json(fs::path(c.out) / "scheme.json", j);
  std::ostringstream csv;
  csv << "id,base,target,level,comp,image,lo,hi\n";
  csv.precision(17);
  for (std::size_t i = 0; i < s.symbols.size(); ++i) {
    const auto& y = s.symbols[i];
    csv << i << ',' << y.base << ',' << y.target << ',' << y.level << ',' << y.comp << ',' << y.image << ','
        << y.enclosure.lo << ',' << y.enclosure.hi << '\n';
  }
  write_text(fs::path(c.out) / "symbols.csv", csv.str());
  return 0;
}

// ---------------------------------------------------------------- tail

int cmd_tail(const Common& c) {
  auto s = scheme_for(c);
  auto t = tail_table(s);
  std::ostringstream csv;
  csv.precision(12);
  csv << "n";
  for (std::size_t j = 1; j <= s.d(); ++j) csv << ",mass" << j;
  csv << '\n';
  for (std::size_t n = 0; n <= s.m_max; ++n) {
    csv << n;
    for (std::size_t j = 0; j < s.d(); ++j) csv << ',' << t.mass[j][n];
    csv << '\n';
  }
  write_text(fs::path(c.out) / "tail.csv", csv.str());
  write_json(fs::path(c.out) / "tail.json", {{"alpha_hat", t.alpha_hat},
                                             {"gamma_hat", t.gamma_hat},
                                             {"untracked", t.untracked},
                                             {"fit_lo", t.fit_lo},
                                             {"fit_hi", t.fit_hi},
                                             {"alpha", s.map.alpha}});
  for (std::size_t j = 0; j < s.d(); ++j) log_line("info", "alpha_hat_" + std::to_string(j + 1) + "=" + std::to_string(t.alpha_hat[j]));
  return 0;
}

// ---------------------------------------------------------------- cylinders

struct CylOpts {
  std::size_t depth = 2;
  std::string ball;
  std::string radius = "1/10";
  std::size_t pairs = 1000;
  std::size_t max_rows = 100000;
};

int cmd_cylinders(const Common& c, const CylOpts& o) {
  auto s = scheme_for(c);
  std::vector<Cylinder> cyls;
  std::optional<BallTest> ball;
  if (!o.ball.empty()) ball.emplace(parse_rational_list(o.ball), parse_rational(o.radius));
  EnumerateOptions eo;
  eo.threads = c.threads;
  eo.ball = ball ? &*ball : nullptr;
  std::size_t total = enumerate_words(s, o.depth, nullptr, [&](const Cylinder& cy) {
    if (cyls.size() < o.max_rows) cyls.push_back(cy);
  }, eo);
  std::ostringstream csv;
  write_cylinders_csv(csv, cyls);
  write_text(fs::path(c.out) / "cylinders.csv", csv.str());
  // Ratio bounds on random admissible concatenations.
  std::mt19937_64 rng(c.seed);
  std::size_t failures = 0, checked = 0;
  nlohmann::json witness;
  for (std::size_t k = 0; k < o.pairs && !cyls.empty(); ++k) {
    const auto& a = cyls[rng() % cyls.size()];
    std::vector<std::size_t> next;
    for (std::size_t i = 0; i < cyls.size(); ++i)
      if (cyls[i].base == a.image) next.push_back(i);
    if (next.empty()) continue;
    const auto& b = cyls[next[rng() % next.size()]];
    ++checked;
    if (!check_ratio_bounds(a, b).all()) {
      if (failures++ == 0) witness = {{"a", a.word}, {"b", b.word}};
    }
  }
  nlohmann::json j = {{"depth", o.depth}, {"count", total}, {"written", cyls.size()}, {"pairs_checked", checked},
                      {"pair_failures", failures}};
  write_json(fs::path(c.out) / "cylinders.json", j);
  if (failures) throw Failure{"ratio bounds fail on a concatenation", witness};
  return 0;
}

// ---------------------------------------------------------------- vdim

int cmd_vdim(const Common& c, const std::string& lengths, const std::string& log_lengths) {
  if (lengths.empty() == log_lengths.empty()) throw std::invalid_argument("give exactly one of --lengths, --log-lengths");
  double s = lengths.empty() ? vdim(parse_doubles(log_lengths)) : vdim_of_lengths(parse_doubles(lengths));
  write_json(fs::path(c.out) / "vdim.json", {{"vdim", s}});
  std::cout << s << '\n';
  return 0;
}

// ---------------------------------------------------------------- approx

struct ApproxOpts {
  std::string target = "1/2,1/4,1/4";
  std::string eps = "2/5";
  std::size_t n = 3;
  std::size_t budget = 100000;
  std::size_t samples = 20;
};

int cmd_approx(const Common& c, const ApproxOpts& o) {
  auto s = scheme_for(c);
  QVec p = parse_rational_list(o.target);
  TargetSpec::single(p).validate(s.d());
  Q eps = parse_rational(o.eps);
  if (!(eps > 0 && eps < 1)) throw std::invalid_argument("eps must lie in (0,1)");
  AssembleOptions ao;
  ao.seed = c.seed;
  ao.threads = c.threads;
  ApproxFamily f;
  try {
    f = build_family(s, o.n, eps, p, o.budget, c.threads, ao);
  } catch (const FamilyError& e) {
    throw Failure{e.what(), {{"word", e.witness}}};
  }
  auto rep = verify_family(s, f, {std::size_t(f.N0) + 1, std::size_t(2 * f.N0)}, o.samples, c.seed);
  nlohmann::json j = family_manifest(f);
  j["verify"] = {{"ratio_ok", rep.ratio_ok},
                 {"local_dim_ok", rep.local_dim_ok},
                 {"words_checked", rep.words_checked},
                 {"min_local", rep.min_local},
                 {"max_local", rep.max_local}};
  j["pool_size"] = f.pool_size;
  j["pool_kept_fraction"] = f.pool_kept_fraction;
  write_json(fs::path(c.out) / "family.json", j);
  std::ostringstream csv;
  write_cylinders_csv(csv, f.cylinders);
  write_text(fs::path(c.out) / "family.csv", csv.str());
  log_line("info", "family size=" + std::to_string(f.cylinders.size()) + " vdim=" + std::to_string(f.vdim));
  if (!rep.ratio_ok) throw Failure{"sampled family word leaves B_eps", {{"words", rep.witnesses}}};
  if (!rep.local_dim_ok) log_line("warn", "local dimension outside [1-eps, 1+eps] on sampled words");
  return 0;
}

// ---------------------------------------------------------------- bridge / verify

struct BridgeOpts {
  std::string target = "1/2,1/4,1/4";
  std::size_t levels = 4;
  std::string eps0 = "2/5";
  std::string policy = "lexicographic";
  std::size_t budget = 2000;
  std::size_t max_pool_depth = 6;
  bool replay = true;
};

std::string itinerary_text(const GenericPoint& x) {
  std::ostringstream os;
  os << "# level reps symbol-ids\n";
  for (std::size_t i = 0; i < x.levels.size(); ++i)
    for (const auto& seg : x.levels[i].segments) {
      os << i << ' ' << seg.reps;
      for (auto id : seg.word) os << ' ' << id;
      os << '\n';
    }
  return os.str();
}

nlohmann::json profile_json(const LocalDimProfile& p) {
  nlohmann::json bands = nlohmann::json::array(), rows = nlohmann::json::array();
  for (const auto& b : p.bands)
    bands.push_back({{"level", b.level},
                     {"gamma", b.gamma},
                     {"lo", b.lo},
                     {"hi", b.hi},
                     {"slack", b.slack},
                     {"profile_in_band", b.profile_in_band},
                     {"profile_in_inflated", b.profile_in_inflated}});
  for (const auto& r : p.rows) rows.push_back({r.level, r.blocks, r.value});
  return {{"bands", bands}, {"rows", rows}};
}

int cmd_bridge(const Common& c, const BridgeOpts& o) {
  auto s = scheme_for(c);
  TargetSpec target = parse_target(o.target);
  target.validate(s.d());
  Q eps0 = parse_rational(o.eps0);
  BlockPolicy policy = parse_policy(o.policy);
  PlanOptions po;
  po.budget = o.budget;
  po.max_pool_depth = o.max_pool_depth;
  po.threads = c.threads;
  po.seed = c.seed;
  auto sch = plan_schedule(s, target, o.levels, eps0, po);
  for (const auto& L : sch.levels) log_line("info", "level eps=" + q_text(L.eps) + " n=" + std::to_string(L.n) + " k=" + std::to_string(L.k));
  auto x = generate_point(s, sch, policy);
  auto cert = verify_generic(s, sch, x, o.replay);
  auto prof = local_dim_profile(s, sch, x);
  const fs::path out(c.out);
  nlohmann::json sj = schedule_to_json(sch);
  write_json(out / "schedule.json", sj);
  write_json(out / "point.json", point_to_json(x));
  write_text(out / "itinerary.txt", itinerary_text(x));
  write_json(out / "profile.json", profile_json(prof));
  nlohmann::json bundle = {{"map", map_to_json(s.map)},
                           {"m_max", s.m_max},
                           {"policy", policy_name(policy)},
                           {"schedule", sj},
                           {"point", point_to_json(x)},
                           {"result", certificate_to_json(cert)}};
  write_json(out / "certificate.json", bundle);
  if (!sch.all_pass()) throw Failure{"schedule inequality fails", sj};
  if (!cert.pass) throw Failure{"generic point fails the exact checks", certificate_to_json(cert)};
  log_line("info", "certificate pass positions=" + std::to_string(cert.positions_checked));
  return 0;
}

int cmd_verify(const Common& c, const std::string& file, bool replay) {
  nlohmann::json b = read_json(file);
  BridgeSchedule sch;
  GenericPoint x;
  MapSpec map;
  std::size_t m_max = 0;
  try {
    map = map_from_json(b.at("map"));
    m_max = b.at("m_max");
    sch = schedule_from_json(b.at("schedule"));
    x = point_from_json(b.at("point"));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed certificate: ") + e.what());
  }
  auto s = build_scheme(map, m_max);
  for (const auto& seg_level : x.levels)
    for (const auto& seg : seg_level.segments)
      for (auto id : seg.word)
        if (id >= s.symbols.size()) throw std::invalid_argument("symbol id out of range");
  auto cert = verify_generic(s, sch, x, replay);
  nlohmann::json cj = certificate_to_json(cert);
  // Schedule inequalities are re-evaluated from the stored numbers.
  bool sched_ok = true;
  for (std::size_t i = 0; i < sch.levels.size(); ++i)
    for (const auto& q : schedule_certificates(sch, i)) sched_ok &= q.pass;
  cj["schedule_pass"] = sched_ok;
  write_json(fs::path(c.out) / "verify.json", cj);
  if (!cert.pass) throw Failure{"certificate rejected", cj};
  if (!sched_ok) throw Failure{"schedule inequality fails", cj};
  log_line("info", "certificate verified");
  return 0;
}

// ---------------------------------------------------------------- simulate

struct SimOpts {
  std::vector<double> x0;
  std::vector<std::uint64_t> seeds;
  std::int64_t n = 100000;
  std::string target;
  std::size_t stride = 1;
};

int cmd_simulate(const Common& c, const SimOpts& o) {
  auto s = scheme_for(c);
  const fs::path out(c.out);
  if (!o.seeds.empty()) {
    EnsembleOptions eo;
    eo.n = o.n;
    eo.threads = c.threads;
    eo.stride = o.stride;
    std::ostringstream csv;
    ensemble_run(s, o.seeds, eo, csv);
    write_text(out / "ensemble.csv", csv.str());
    log_line("info", "ensemble diagnostic only (no assertion)");
    return 0;
  }
  std::vector<double> starts = o.x0;
  if (starts.empty()) {
    std::mt19937_64 rng(c.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double x;
    do x = u(rng);
    while (classify(s, x).kind != RegionKind::Y);
    starts.push_back(x);
  }
  nlohmann::json traces = nlohmann::json::array();
  std::optional<Failure> fail;
  for (double x0 : starts) {
    auto t = simulate_occupancy(s, x0, o.n, true);
    nlohmann::json j = trace_summary(t);
    if (t.starts_in_y && t.return_marks.size() >= 2) {
      auto r = coding_check(t);
      j["coding"] = coding_to_json(r);
      if (!r.pass && !fail) fail = Failure{"coding sandwich fails", {{"x0", x0}, {"coding", j["coding"]}}};
    }
    if (!o.target.empty() && t.return_marks.size() > 1) {
      auto est = limit_set_estimate(t, parse_target(o.target));
      j["limit_set"] = {{"hausdorff", est.hausdorff},
                        {"cloud_to_target", est.cloud_to_target},
                        {"target_to_cloud", est.target_to_cloud},
                        {"max_consecutive", est.max_consecutive},
                        {"cloud_size", est.cloud.size()}};
    }
    traces.push_back(j);
  }
  write_json(out / "simulate.json", {{"traces", traces}});
  if (fail) throw *fail;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generic points of intermittent interval maps"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file with option values");

  auto* describe = app.add_subcommand("describe-map", "Map document and assumption checks");
  auto* induce = app.add_subcommand("induce", "First-return scheme summary and symbol table");
  auto* tail = app.add_subcommand("tail", "Return-time tails and fitted exponents");
  auto* cylinders = app.add_subcommand("cylinders", "Enumerate n-cylinders and check ratio bounds");
  auto* vdim_cmd = app.add_subcommand("vdim", "Virtual dimension of a list of lengths");
  auto* approx = app.add_subcommand("approx", "Assemble and certify a repeller approximation");
  auto* bridge = app.add_subcommand("bridge", "Plan a schedule, build a generic point and certify it");
  auto* verify = app.add_subcommand("verify", "Re-check a bridge certificate");
  auto* simulate = app.add_subcommand("simulate", "Orbit occupancy, coding checks and ensembles");

  std::map<CLI::App*, Common> commons;
  for (auto [sub, m_max] : std::initializer_list<std::pair<CLI::App*, std::size_t>>{
           {describe, 2000}, {induce, 2000}, {tail, 10000}, {cylinders, 20}, {vdim_cmd, 20}, {approx, 20},
           {bridge, 120}, {verify, 120}, {simulate, 2000}})
    add_common(sub, commons[sub], m_max);

  CylOpts cyl;
  cylinders->add_option("--depth", cyl.depth, "Word length")->capture_default_str()->check(CLI::Range(1, 12));
  cylinders->add_option("--ball", cyl.ball, "Ratio ball centre, e.g. 1/2,1/4,1/4");
  cylinders->add_option("--radius", cyl.radius, "Ratio ball radius")->capture_default_str();
  cylinders->add_option("--pairs", cyl.pairs, "Random concatenations to check")->capture_default_str();
  cylinders->add_option("--max-rows", cyl.max_rows, "Rows kept in cylinders.csv")->capture_default_str();

  std::string lengths, log_lengths;
  vdim_cmd->add_option("--lengths", lengths, "Comma-separated lengths in (0,1)");
  vdim_cmd->add_option("--log-lengths", log_lengths, "Comma-separated log-lengths");

  ApproxOpts ao;
  approx->add_option("--target", ao.target, "p_bar")->capture_default_str();
  approx->add_option("--eps", ao.eps, "epsilon")->capture_default_str();
  approx->add_option("--n", ao.n, "Pool word depth")->capture_default_str()->check(CLI::Range(1, 8));
  approx->add_option("--budget", ao.budget, "Pool words kept")->capture_default_str();
  approx->add_option("--samples", ao.samples, "Sampled words per length in verification")->capture_default_str();

  BridgeOpts bo;
  bridge->add_option("--target", bo.target, "Point a,b,c or polyline a,b,c;d,e,f")->capture_default_str();
  bridge->add_option("--levels", bo.levels, "Number of levels I")->capture_default_str()->check(CLI::Range(2, 12));
  bridge->add_option("--eps0", bo.eps0, "epsilon_0")->capture_default_str();
  bridge->add_option("--seed-policy", bo.policy, "Block choice: lexicographic or longest")->capture_default_str();
  bridge->add_option("--budget", bo.budget, "Pool words per level")->capture_default_str();
  bridge->add_option("--max-pool-depth", bo.max_pool_depth, "Deepest pool tried per level")->capture_default_str();
  bridge->add_flag("!--no-replay", bo.replay, "Skip the float replay of level 0");

  std::string cert_file;
  bool verify_replay = true;
  verify->add_option("--certificate", cert_file, "certificate.json written by bridge")->required();
  verify->add_flag("!--no-replay", verify_replay, "Skip the float replay of level 0");

  SimOpts so;
  simulate->add_option("--x0", so.x0, "Starting points (default: one random point of Y)")->delimiter(',');
  simulate->add_option("--seeds", so.seeds, "Ensemble seeds; writes ensemble.csv")->delimiter(',');
  simulate->add_option("--n", so.n, "Horizon")->capture_default_str()->check(CLI::Range(std::int64_t(1), std::int64_t(1000000000)));
  simulate->add_option("--target", so.target, "Target for the limit-set distance");
  simulate->add_option("--stride", so.stride, "Keep every stride-th return in ensemble.csv")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const Common& common = commons.at(chosen);
  try {
    if (*describe) return cmd_describe(common);
    if (*induce) return cmd_induce(common);
    if (*tail) return cmd_tail(common);
    if (*cylinders) return cmd_cylinders(common, cyl);
    if (*vdim_cmd) return cmd_vdim(common, lengths, log_lengths);
    if (*approx) return cmd_approx(common, ao);
    if (*bridge) return cmd_bridge(common, bo);
    if (*verify) return cmd_verify(common, cert_file, verify_replay);
    if (*simulate) return cmd_simulate(common, so);
  } catch (const Failure& f) {
    write_json(fs::path(common.out) / "witness.json", {{"failure", f.what}, {"witness", f.witness}});
    log_line("error", f.what + "; witness in " + (fs::path(common.out) / "witness.json").string());
    return 1;
  } catch (const std::invalid_argument& e) {
    log_line("error", e.what());
    return 2;
  } catch (const std::domain_error& e) {
    log_line("error", e.what());
    return 2;
  } catch (const std::exception& e) {
    write_json(fs::path(common.out) / "witness.json", {{"failure", e.what()}});
    log_line("error", e.what());
    return 1;
  }
  return 2;
}
