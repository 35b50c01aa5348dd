// gepl: sample allocations, summarize posterior samples of partitions, and
// emit plot data.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gepl/epl.hpp"
#include "gepl/error.hpp"
#include "gepl/greedy.hpp"
#include "gepl/io.hpp"
#include "gepl/losses.hpp"
#include "gepl/models.hpp"
#include "gepl/sampler.hpp"

#ifndef GEPL_VERSION
#define GEPL_VERSION "dev"
#endif

namespace {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& given) {
  if (given) return *given;
  std::random_device rd;
  const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  std::cerr << "seed: " << s << '\n';
  return s;
}

template <class T>
T read_file(const std::string& path, T (*reader)(std::istream&)) {
  std::ifstream in(path);
  if (!in) throw gepl::DataError("cannot open '" + path + "'");
  return reader(in);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw gepl::DataError("cannot write '" + path + "'");
  return out;
}

gepl::Partition read_partition_file(const std::string& path, std::size_t k_up) {
  const auto s = gepl::io::read_sample_file(path);
  if (s.rows() != 1) throw gepl::DataError("'" + path + "' must hold exactly one partition");
  const auto row = s.row(0);
  return gepl::Partition({row.begin(), row.end()}, k_up);
}

// ---------------------------------------------------------------------------
// sample

struct SampleArgs {
  std::string model = "gmm";
  std::string data;
  double tau = 0.01, gamma = 0.5, delta = 0.5;
  double alpha = 1.0;
  double beta = 0.5;
  std::size_t kup = 50;
  std::size_t kup_cols = 0;
  std::string k_prior = "fixed";
  double k_rate = 1.0;
  std::size_t burnin = 0, thin = 1, keep = 1000;
  std::optional<std::uint64_t> seed;
  std::string init = "random";
  std::string out;
  std::string trace;
};

gepl::AllocationPrior make_prior(const SampleArgs& a, std::size_t k_up) {
  gepl::AllocationPrior p{a.alpha, k_up, gepl::GroupCountPrior::FixedDimension, a.k_rate};
  if (a.k_prior == "poisson") p.k_mode = gepl::GroupCountPrior::Poisson;
  if (a.k_prior == "occupied") p.k_mode = gepl::GroupCountPrior::Occupied;
  return p;
}

const char* prior_mode_name(gepl::GroupCountPrior m) {
  switch (m) {
    case gepl::GroupCountPrior::Poisson: return "poisson";
    case gepl::GroupCountPrior::Occupied: return "occupied";
    default: return "fixed";
  }
}

int cmd_sample(const SampleArgs& a) {
  if (a.keep == 0) throw UsageError("--keep must be at least 1");
  if (a.thin == 0) throw UsageError("--thin must be at least 1");
  if (a.kup < 2 || (a.kup_cols != 0 && a.kup_cols < 2)) throw UsageError("the sampler requires --kup >= 2");
  gepl::ChainConfig cfg;
  cfg.iterations = a.keep;
  cfg.burn_in = a.burnin;
  cfg.thin = a.thin;
  cfg.k_up = a.kup;
  cfg.k_up_cols = a.kup_cols;
  cfg.seed = resolve_seed(a.seed);
  if (a.init.rfind("file:", 0) == 0) {
    cfg.init = read_partition_file(a.init.substr(5), a.kup);
  } else if (a.init != "random") {
    throw UsageError("--init for sample must be 'random' or 'file:<path>'");
  }
  const std::string trace_path = a.trace.empty() ? a.out + ".trace" : a.trace;

  const auto t0 = Clock::now();
  double rate = 0.0;
  if (a.model == "gmm") {
    gepl::GmmSpec m;
    m.data = read_file(a.data, &gepl::io::read_gmm_data);
    m.tau = a.tau;
    m.gamma = a.gamma;
    m.delta = a.delta;
    m.prior = make_prior(a, a.kup);
    auto out = gepl::run_chain(m, cfg);
    rate = out.acceptance_rate;
    auto f = open_out(a.out);
    gepl::io::write_sample(f, out.sample);
    auto t = open_out(trace_path);
    gepl::io::write_trace(t, *out.sample.log_posterior());
  } else if (a.model == "sbm") {
    gepl::SbmSpec m;
    m.graph = read_file(a.data, &gepl::io::read_edge_list);
    m.beta_a = m.beta_b = a.beta;
    m.prior = make_prior(a, a.kup);
    auto out = gepl::run_chain(m, cfg);
    rate = out.acceptance_rate;
    auto f = open_out(a.out);
    gepl::io::write_sample(f, out.sample);
    auto t = open_out(trace_path);
    gepl::io::write_trace(t, *out.sample.log_posterior());
  } else if (a.model == "lbm") {
    const auto mat = read_file(a.data, &gepl::io::read_binary_matrix);
    gepl::LbmSpec m;
    m.rows = mat.rows;
    m.cols = mat.cols;
    m.y = mat.y;
    m.beta_a = m.beta_b = a.beta;
    m.row_prior = make_prior(a, a.kup);
    m.col_prior = make_prior(a, a.kup_cols ? a.kup_cols : a.kup);
    auto out = gepl::run_chain_lbm(m, cfg);
    rate = out.rows.acceptance_rate;
    auto f = open_out(a.out);
    gepl::io::write_sample(f, out.rows.sample);
    auto fc = open_out(a.out + ".cols");
    gepl::io::write_sample(fc, out.cols.sample);
    auto t = open_out(trace_path);
    gepl::io::write_trace(t, out.joint_trace);
  } else {
    throw UsageError("unknown --model '" + a.model + "'");
  }
  std::cout << "group-count prior: " << prior_mode_name(make_prior(a, a.kup).k_mode) << '\n'
            << "acceptance rate: " << rate << '\n' << "wall time: " << seconds_since(t0) << " s\n";
  return 0;
}

// ---------------------------------------------------------------------------
// summarize / report

struct SummaryArgs {
  std::string sample;
  std::string trace;
  std::string loss = "vi";
  std::size_t kup = 0;  // 0: from the sample header
  std::size_t restarts = 10;
  std::string init;  // empty: alternate noisy-map and random
  double noise_frac = 0.1;
  std::size_t max_sweeps = 100;
  std::size_t threads = 1;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct Summary {
  json manifest;
  gepl::GreedyResult result;
  gepl::PosteriorSample sample;
  gepl::WeightedSample compressed;
  double seconds = 0.0;
};

json histogram_json(const std::map<std::size_t, double>& h) {
  json out = json::object();
  for (const auto& [k, p] : h) out[std::to_string(k)] = p;
  return out;
}

json labels_json(const gepl::Partition& p) {
  json out = json::array();
  for (gepl::Label l : p.labels()) out.push_back(l + 1);
  return out;
}

Summary summarize(const SummaryArgs& a, const std::string& subcommand) {
  std::optional<std::string> trace;
  if (!a.trace.empty()) trace = a.trace;
  Summary s{json::object(), {}, gepl::io::read_sample_file(a.sample, trace), {}, 0.0};
  const auto parsed = gepl::parse_loss_kind(a.loss);
  if (!parsed) throw UsageError("--loss must be one of binder, vi, nvi, nid, zeroone");
  const gepl::LossKind kind = *parsed;
  gepl::GreedyConfig cfg;
  cfg.k_up = a.kup ? a.kup : s.sample.k_up();
  cfg.restarts = a.restarts;
  cfg.max_sweeps = a.max_sweeps;
  cfg.threads = a.threads;
  cfg.noise_fraction = a.noise_frac;
  cfg.seed = resolve_seed(a.seed);
  if (a.init == "random") {
    cfg.init = gepl::RandomInit{cfg.k_up};
  } else if (a.init == "noisy-map") {
    cfg.init = gepl::NoisyMapInit{a.noise_frac};
  } else if (a.init.rfind("file:", 0) == 0) {
    cfg.init = gepl::GivenInit{read_partition_file(a.init.substr(5), cfg.k_up)};
  } else if (!a.init.empty()) {
    throw UsageError("--init must be random, noisy-map or file:<path>");
  }
  if (s.sample.log_posterior()) {
    const auto map = gepl::map_partition(s.sample);
    // a MAP row above K_up is reported by greedy_minimize as a data error
    if (map.occupied() <= cfg.k_up) cfg.map_partition = gepl::Partition({map.labels().begin(), map.labels().end()}, cfg.k_up);
  }

  const auto t0 = Clock::now();
  s.compressed = gepl::compress(s.sample);
  s.result = gepl::greedy_minimize(s.compressed, gepl::LossSpec::builtin(kind), cfg);
  s.seconds = seconds_since(t0);

  s.manifest = json{{"subcommand", subcommand},
                {"tool_version", GEPL_VERSION},
                {"sample", a.sample},
                {"trace", a.trace.empty() ? json(nullptr) : json(a.trace)},
                {"loss", gepl::loss_name(kind)},
                {"kup", cfg.k_up},
                {"restarts", cfg.restarts},
                {"init", a.init.empty() ? "alternate" : a.init},
                {"noise_frac", a.noise_frac},
                {"max_sweeps", cfg.max_sweeps},
                {"threads", cfg.threads},
                {"seed", cfg.seed},
                {"out", a.out}};
  return s;
}

json report_json(const Summary& s) {
  json restarts = json::array();
  for (const auto& r : s.result.per_restart)
    restarts.push_back({{"epl", r.epl}, {"sweeps", r.sweeps}, {"converged", r.converged}});
  const auto& best = s.result.best;
  return {{"manifest", s.manifest},
          {"partition", labels_json(best.partition)},
          {"groups", best.partition.occupied()},
          {"epl", best.epl},
          {"loss", gepl::loss_name(best.loss)},
          {"evaluations", best.evaluations},
          {"restarts", restarts},
          {"compression",
           {{"draws", s.sample.rows()},
            {"unique", s.compressed.size()},
            {"ratio", static_cast<double>(s.compressed.size()) / static_cast<double>(s.sample.rows())}}},
          {"k_histogram", histogram_json(gepl::k_histogram(s.sample))}};
}

int cmd_summarize(const SummaryArgs& a) {
  const Summary s = summarize(a, "summarize");
  const std::string text = report_json(s).dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    auto f = open_out(a.out);
    f << text;
  }
  std::cerr << "groups: " << s.result.best.partition.occupied() << "  epl: " << s.result.best.epl
            << "  wall time: " << s.seconds << " s\n";
  return 0;
}

struct ReportArgs {
  SummaryArgs summary;
  std::string model;
  std::string data;
  bool reorder = false;
  std::string prefix;
};

// Items ordered by group (canonical order), then by index; 1-based.
std::vector<std::size_t> group_ordering(const gepl::Partition& p) {
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return p[i] < p[j]; });
  return order;
}

int cmd_report(const ReportArgs& a) {
  if (a.reorder && a.data.empty()) throw UsageError("--reorder needs --data");
  if (a.reorder && a.model != "sbm" && a.model != "lbm") throw UsageError("--reorder needs --model sbm or lbm");
  const auto sample = gepl::io::read_sample_file(a.summary.sample);
  {
    auto f = open_out(a.prefix + ".khist.csv");
    f << "k,probability\n" << std::setprecision(17);
    for (const auto& [k, p] : gepl::k_histogram(sample)) f << k << ',' << p << '\n';
  }
  if (!a.reorder) return 0;

  const Summary s = summarize(a.summary, "report");
  const auto order = group_ordering(s.result.best.partition);
  {
    auto f = open_out(a.prefix + ".order.csv");
    f << "position,item,group\n";
    for (std::size_t k = 0; k < order.size(); ++k)
      f << k + 1 << ',' << order[k] + 1 << ',' << s.result.best.partition[order[k]] + 1 << '\n';
  }
  auto f = open_out(a.prefix + ".reordered.csv");
  if (a.model == "sbm") {
    const auto g = read_file(a.data, &gepl::io::read_edge_list);
    if (g.nodes() != order.size()) throw gepl::DataError("graph and sample disagree on the number of nodes");
    for (std::size_t i : order) {
      for (std::size_t k = 0; k < order.size(); ++k) f << (k ? "," : "") << (g.has_edge(i, order[k]) ? 1 : 0);
      f << '\n';
    }
  } else {
    const auto m = read_file(a.data, &gepl::io::read_binary_matrix);
    if (m.rows != order.size()) throw gepl::DataError("matrix and sample disagree on the number of rows");
    for (std::size_t i : order) {
      for (std::size_t j = 0; j < m.cols; ++j) f << (j ? "," : "") << int(m.y[i * m.cols + j]);
      f << '\n';
    }
  }
  return 0;
}

int cmd_psm(const std::string& sample, const std::string& out) {
  const auto s = gepl::io::read_sample_file(sample);
  const auto m = gepl::psm(s);
  if (out.empty()) {
    gepl::io::write_psm_csv(std::cout, m);
  } else {
    auto f = open_out(out);
    gepl::io::write_psm_csv(f, m);
  }
  return 0;
}

int cmd_compress_stats(const std::string& sample) {
  const auto s = gepl::io::read_sample_file(sample);
  const auto w = gepl::compress(s);
  double top = 0.0;
  for (double x : w.weights) top = std::max(top, x);
  const json j = {{"draws", s.rows()},
                  {"unique", w.size()},
                  {"ratio", static_cast<double>(w.size()) / static_cast<double>(s.rows())},
                  {"max_weight", top}};
  std::cout << j.dump(2) << '\n';
  return 0;
}

void add_summary_options(CLI::App* cmd, SummaryArgs& a) {
  cmd->add_option("--sample", a.sample, "sample file")->required();
  cmd->add_option("--trace", a.trace, "log-posterior trace (enables the MAP start)");
  cmd->add_option("--loss", a.loss, "binder|vi|nvi|nid|zeroone")
      ->check(CLI::IsMember({"binder", "vi", "nvi", "nid", "zeroone"}));
  cmd->add_option("--kup", a.kup, "maximum number of groups (default: from the sample)");
  cmd->add_option("--restarts", a.restarts, "greedy restarts")->check(CLI::PositiveNumber);
  cmd->add_option("--init", a.init, "random|noisy-map|file:<path>");
  cmd->add_option("--noise-frac", a.noise_frac, "fraction of items perturbed by noisy-map")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--max-sweeps", a.max_sweeps, "sweep cap per restart")->check(CLI::PositiveNumber);
  cmd->add_option("--threads", a.threads, "worker threads for restarts")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", a.seed, "random seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point estimates of partitions from posterior samples"};
  app.set_version_flag("--version", GEPL_VERSION);
  app.require_subcommand(1);

  SampleArgs sa;
  auto* sample = app.add_subcommand("sample", "run the allocation sampler");
  sample->add_option("--model", sa.model, "gmm|sbm|lbm")->check(CLI::IsMember({"gmm", "sbm", "lbm"}));
  sample->add_option("--data", sa.data, "data file")->required();
  sample->add_option("--tau", sa.tau);
  sample->add_option("--gamma", sa.gamma);
  sample->add_option("--delta", sa.delta);
  sample->add_option("--alpha", sa.alpha, "Dirichlet concentration");
  sample->add_option("--beta", sa.beta, "Beta hyperparameter (both shapes)");
  sample->add_option("--kup", sa.kup, "maximum number of groups");
  sample->add_option("--kup-cols", sa.kup_cols, "column-side maximum for lbm (default: --kup)");
  sample->add_option("--k-prior", sa.k_prior, "fixed|poisson|occupied")
      ->check(CLI::IsMember({"fixed", "poisson", "occupied"}));
  sample->add_option("--k-rate", sa.k_rate, "Poisson rate for --k-prior poisson");
  sample->add_option("--burnin", sa.burnin);
  sample->add_option("--thin", sa.thin);
  sample->add_option("--keep", sa.keep, "kept draws");
  sample->add_option("--seed", sa.seed);
  sample->add_option("--init", sa.init, "random|file:<path>");
  sample->add_option("--out", sa.out, "sample file")->required();
  sample->add_option("--trace", sa.trace, "trace file (default: <out>.trace)");

  SummaryArgs su;
  auto* summ = app.add_subcommand("summarize", "minimize the expected posterior loss");
  add_summary_options(summ, su);
  summ->add_option("--out", su.out, "report file (default: stdout)");

  std::string psm_sample, psm_out;
  auto* psm = app.add_subcommand("psm", "posterior similarity matrix");
  psm->add_option("--sample", psm_sample)->required();
  psm->add_option("--out", psm_out, "CSV file (default: stdout)");

  ReportArgs ra;
  auto* report = app.add_subcommand("report", "plot data: K histogram and node ordering");
  add_summary_options(report, ra.summary);
  report->add_option("--model", ra.model, "sbm|lbm, for --reorder");
  report->add_option("--data", ra.data, "data file, for --reorder");
  report->add_flag("--reorder", ra.reorder, "order items by the optimal partition");
  report->add_option("--prefix", ra.prefix, "output path prefix")->required();

  std::string cs_sample;
  auto* cstats = app.add_subcommand("compress-stats", "duplicate statistics of a sample");
  cstats->add_option("--sample", cs_sample)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*sample) return cmd_sample(sa);
    if (*summ) return cmd_summarize(su);
    if (*psm) return cmd_psm(psm_sample, psm_out);
    if (*report) return cmd_report(ra);
    if (*cstats) return cmd_compress_stats(cs_sample);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const gepl::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const gepl::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const gepl::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
