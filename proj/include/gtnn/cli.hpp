#pragma once

// Command-line front end. Every subcommand parses flags, loads inputs, calls
// one library operation and writes machine-parseable output.
//
// Exit codes: 0 ok, 1 I/O or file-format error, 2 usage or invalid argument,
// 3 internal invariant violation (including a failed exactness check).

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gtnn/bench.hpp"
#include "gtnn/datagen.hpp"
#include "gtnn/error.hpp"
#include "gtnn/index_max.hpp"
#include "gtnn/index_sum.hpp"
#include "gtnn/search.hpp"
#include "gtnn/theory.hpp"
#include "gtnn/vecstore.hpp"

namespace gtnn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitInvariant = 3;

/// Raised when a result fails its own consistency check.
class InvariantViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

/// `-` means the given stream; anything else is a file opened for writing.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) {
    if (path.empty() || path == "-") {
      out_ = &fallback;
      return;
    }
    file_ = std::make_unique<std::ofstream>(path, std::ios::trunc);
    if (!*file_) throw Error(Errc::kIo, "cannot open '" + path + "' for writing");
    out_ = file_.get();
  }
  std::ostream& operator*() { return *out_; }
  void finish() {
    out_->flush();
    if (!*out_) throw Error(Errc::kIo, "write failed");
  }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* out_ = nullptr;
};

inline datagen::Planted parse_plant(const std::string& text) {
  datagen::Planted p;
  char c1 = 0, c2 = 0;
  std::istringstream in(text);
  if (!(in >> p.query_id >> c1 >> p.count >> c2 >> p.similarity) || c1 != ':' || c2 != ':' || !in.eof()) {
    throw CLI::ValidationError("--plant", "expected QUERY:COUNT:SIMILARITY, got '" + text + "'");
  }
  return p;
}

/// Config files hold plain key=value lines; keys without a section belong to
/// the subcommand being run.
class SubcommandConfig : public CLI::ConfigBase {
 public:
  explicit SubcommandConfig(const CLI::App& app) : app_(app) {}

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    auto items = CLI::ConfigBase::from_config(input);
    const auto chosen = app_.get_subcommands();
    if (chosen.empty()) return items;
    for (auto& item : items) {
      if (item.parents.empty()) item.parents.push_back(chosen.front()->get_name());
    }
    return items;
  }

 private:
  const CLI::App& app_;
};

inline void check_rho(double rho) {
  if (!(rho > 0.0 && rho <= 2.0)) throw CLI::ValidationError("--rho", "must be in (0, 2]");
}

}  // namespace detail

struct Settings {
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  bool allow_negative = false;

  // gen
  std::size_t n = 0;
  std::size_t d = 0;
  double concentration = 0.05;
  std::vector<std::string> plants;
  std::size_t query_count = 0;
  std::string queries_out;

  // shared paths
  std::string store;
  std::string queries;
  std::string index;
  std::string input;
  std::string out = "-";
  std::string stats;
  std::string summary = "-";

  std::string variant = "sum";
  std::vector<std::string> variants{"sum", "max", "exhaustive"};
  double rho = 0.8;
  double lambda = 0.0;
  std::optional<double> c;
  std::string model = "erlang";
  std::size_t samples = 100000;
  std::uint64_t trials = 1000;
  bool streaming = false;
  bool theory = false;
  double initial_fraction = 0.8;
  std::size_t batch = 100;
};

namespace commands {

inline void gen(const Settings& s, std::ostream& out) {
  datagen::GenSpec spec{s.n, s.d, s.concentration, {}, s.seed};
  for (const auto& p : s.plants) spec.planted.push_back(detail::parse_plant(p));
  const auto store = datagen::gen_store(spec);
  store.save(std::filesystem::path(s.out));
  out << "rows=" << store.size() << "\ndim=" << store.dim() << '\n';
  if (s.query_count > 0) {
    datagen::gen_queries(spec, s.query_count).save(std::filesystem::path(s.queries_out));
    out << "queries=" << s.query_count << '\n';
  }
}

inline void build(const Settings& s, std::ostream& out) {
  const auto store = VectorStore::read_any(s.store, s.allow_negative);
  if (s.variant == "sum") {
    SumIndex::build(store).save(std::filesystem::path(s.out));
  } else {
    MaxIndex::build(store).save(std::filesystem::path(s.out));
  }
  out << "variant=" << s.variant << "\nrows=" << store.size() << '\n';
}

inline void append(const Settings& s, std::ostream& out) {
  auto store = VectorStore::load(std::filesystem::path(s.store));
  auto index = SumIndex::load(std::filesystem::path(s.index), store);
  const auto input = VectorStore::read_any(s.input, store.allow_negative());
  if (input.dim() != store.dim()) throw Error(Errc::kDimensionMismatch, "input dim differs from store dim");
  for (Index i = 1; i <= input.size(); ++i) {
    const auto v = input.vector(i);
    store.validate(v);
    store.append(v);
    index.append(v);
  }
  index.check_fresh();
  store.save(std::filesystem::path(s.store));
  index.save(std::filesystem::path(s.index));
  out << "appended=" << input.size() << "\nrows=" << store.size() << "\nadditions=" << index.additions() << '\n';
}

inline void query(const Settings& s, std::ostream& out) {
  detail::check_rho(s.rho);
  const auto store = VectorStore::read_any(s.store, s.allow_negative);
  const auto queries = VectorStore::read_any(s.queries, s.allow_negative);
  if (queries.dim() != store.dim()) throw Error(Errc::kDimensionMismatch, "queries and store differ in dimension");

  std::optional<SumIndex> sum;
  std::optional<MaxIndex> max;
  if (s.variant == "sum") {
    sum = s.index.empty() ? SumIndex::build(store) : SumIndex::load(std::filesystem::path(s.index), store);
  } else if (s.variant == "max") {
    max = s.index.empty() ? MaxIndex::build(store) : MaxIndex::load(std::filesystem::path(s.index), store);
  }

  std::vector<QueryResult> results(queries.size());
  bench::detail::parallel_for(queries.size(), s.jobs, [&](std::size_t i) {
    const auto q = queries.row(i + 1);
    results[i] = sum ? search_sum(*sum, q, s.rho) : max ? search_max(*max, q, s.rho) : search_exhaustive(store, q, s.rho);
  });

  detail::Sink sink(s.out, out);
  *sink << "query_id,neighbor_id,similarity\n" << std::setprecision(9);
  for (std::size_t i = 0; i < results.size(); ++i) {
    for (const auto& nb : results[i].neighbors) *sink << (i + 1) << ',' << nb.id << ',' << nb.similarity << '\n';
  }
  sink.finish();

  const std::string stats_path = !s.stats.empty() ? s.stats : (s.out == "-" ? std::string() : s.out + ".stats");
  if (stats_path.empty()) return;
  detail::Sink stats(stats_path, out);
  *stats << "query_id,dot_products,visited_pools,boundary_rechecks,result_size\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& st = results[i].stats;
    *stats << (i + 1) << ',' << st.dot_products << ',' << st.visited_pools << ',' << st.boundary_rechecks << ','
           << results[i].neighbors.size() << '\n';
  }
  stats.finish();
}

inline void fit(const Settings& s, std::ostream& out) {
  const auto store = VectorStore::read_any(s.store);
  const auto queries = s.queries.empty() ? store : VectorStore::read_any(s.queries);
  const auto samples = bench::sample_dots(store, queries, s.samples, s.seed);
  const auto model = theory::fit_lambda(samples);
  const auto m = theory::tne_moments(model.lambda);
  out << std::setprecision(10) << "lambda=" << model.lambda << "\nsamples=" << samples.size()
      << "\nmean=" << m.mean << "\nlambda_std_error=" << 1.0 / std::sqrt(static_cast<double>(samples.size()) * m.variance)
      << '\n';
}

inline void predict(const Settings& s, std::ostream& out) {
  const auto model = s.model == "clt" ? theory::PruneModel::kCentralLimit : theory::PruneModel::kTruncatedErlang;
  theory::write_record(out, theory::expected_tests_sum(s.n, s.rho, s.lambda, model), "sum.");
  if (s.c) theory::write_record(out, theory::expected_tests_max_ub(s.n, s.rho, s.lambda, *s.c), "max.");
}

inline void simulate(const Settings& s, std::ostream& out) {
  out << std::setprecision(10);
  if (s.c) {
    const double mean = theory::simulate_splitting_max(s.n, s.rho, s.lambda, *s.c, s.trials, s.seed, s.jobs);
    out << "variant=max\nmean_dot_products=" << mean
        << "\nexpected_max_ub=" << theory::expected_tests_max_ub(s.n, s.rho, s.lambda, *s.c).expected_tests << '\n';
  } else {
    const double mean = theory::simulate_splitting(s.n, s.rho, s.lambda, s.trials, s.seed, s.jobs);
    const double expected = theory::expected_tests_sum(s.n, s.rho, s.lambda).expected_tests;
    out << "variant=sum\nmean_dot_products=" << mean << "\nexpected_tests=" << expected
        << "\nrelative_error=" << std::abs(mean - expected) / expected << '\n';
  }
  out << "trials=" << s.trials << '\n';
}

inline void run_bench(const Settings& s, std::ostream& out) {
  detail::check_rho(s.rho);
  const auto store = VectorStore::read_any(s.store, s.allow_negative);
  bench::BenchReport report;
  if (s.streaming) {
    bench::StreamingOptions opt;
    opt.initial_fraction = s.initial_fraction;
    opt.batch = s.batch;
    opt.rho = s.rho;
    opt.seed = s.seed;
    report = bench::run_streaming(store, opt);
  } else {
    const auto queries = VectorStore::read_any(s.queries, s.allow_negative);
    std::vector<bench::Variant> variants;
    for (const auto& v : s.variants) variants.push_back(bench::parse_variant(v));
    report = bench::run_static(store, queries, s.rho, variants, s.jobs);
    if (s.theory) report.theory = bench::compare_theory(store, queries, s.rho, {s.samples, 90.0, s.seed});
  }
  if (s.out != "-") {
    detail::Sink csv(s.out, out);
    bench::write_csv(*csv, report);
    csv.finish();
  }
  detail::Sink summary(s.summary, out);
  bench::write_summary(*summary, report);
  summary.finish();
  if (!report.exact()) throw InvariantViolation("pooled search disagreed with the exhaustive scan");
}

}  // namespace commands

/// Parses argv and runs one subcommand, writing to `out` and `err`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Exact range search over unit vectors by adaptive group testing", "gtnn"};
  app.require_subcommand(1, 1);
  Settings s;

  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", s.seed, "random seed")->envname("GTNN_SEED");
  };
  app.set_config("--config", "", "key=value file for the subcommand; flags override it");
  app.config_formatter(std::make_shared<detail::SubcommandConfig>(app));
  app.fallthrough();
  auto add_common = [](CLI::App* sub) { sub->fallthrough(); };
  auto add_jobs = [&](CLI::App* sub) {
    sub->add_option("--jobs", s.jobs, "query-level worker threads")->check(CLI::Range(1u, 1024u));
  };
  const auto variant_sum_max = CLI::IsMember({"sum", "max"});
  const auto variant_any = CLI::IsMember({"sum", "max", "exhaustive"});

  auto* gen = app.add_subcommand("gen", "write a synthetic store");
  add_common(gen);
  add_seed(gen);
  gen->add_option("--n", s.n, "rows")->required()->check(CLI::PositiveNumber);
  gen->add_option("--d", s.d, "dimension")->required()->check(CLI::PositiveNumber);
  gen->add_option("--concentration", s.concentration, "Dirichlet concentration")->check(CLI::PositiveNumber);
  gen->add_option("--plant", s.plants, "QUERY:COUNT:SIMILARITY planted neighbors");
  auto* qcount = gen->add_option("--queries", s.query_count, "also generate this many queries");
  auto* qout = gen->add_option("--queries-out", s.queries_out, "query file");
  qcount->needs(qout);
  qout->needs(qcount);
  gen->add_option("--out", s.out, "store file")->required();

  auto* build = app.add_subcommand("build", "build an index file from a store");
  add_common(build);
  build->add_option("--store", s.store)->required();
  build->add_option("--variant", s.variant)->check(variant_sum_max);
  build->add_option("--out", s.out)->required();
  build->add_flag("--allow-negative", s.allow_negative, "accept negative coordinates in text input");

  auto* append = app.add_subcommand("append", "stream vectors into a store and its sum index");
  add_common(append);
  append->add_option("--store", s.store, "binary store, rewritten")->required();
  append->add_option("--index", s.index, "sum index, rewritten")->required();
  append->add_option("--input", s.input, "vectors to append")->required();

  auto* query = app.add_subcommand("query", "range search");
  add_common(query);
  add_jobs(query);
  query->add_option("--store", s.store)->required();
  query->add_option("--queries", s.queries)->required();
  query->add_option("--rho", s.rho, "similarity threshold in (0, 2]")->required();
  query->add_option("--variant", s.variant)->check(variant_any);
  query->add_option("--index", s.index, "prebuilt index (rebuilt when omitted)");
  query->add_option("--out", s.out, "results CSV, - for stdout");
  query->add_option("--stats", s.stats, "stats sidecar (default OUT.stats)");
  query->add_flag("--allow-negative", s.allow_negative);

  auto* fit = app.add_subcommand("fit", "fit the TNE rate to sampled similarities");
  add_common(fit);
  add_seed(fit);
  fit->add_option("--store", s.store)->required();
  fit->add_option("--queries", s.queries, "query file (default: the store)");
  fit->add_option("--samples", s.samples)->check(CLI::Range(std::size_t{100}, std::size_t{1} << 32));

  auto* predict = app.add_subcommand("predict", "expected dot products per query");
  add_common(predict);
  predict->add_option("--n", s.n)->required()->check(CLI::Range(std::size_t{2}, std::size_t{1} << 62));
  predict->add_option("--rho", s.rho)->required()->check(CLI::PositiveNumber);
  predict->add_option("--lambda", s.lambda)->required()->check(CLI::PositiveNumber);
  predict->add_option("--c", s.c, "max-pool ratio bound; adds the upper bound")->check(CLI::Range(1.0, 1e12));
  predict->add_option("--model", s.model)->check(CLI::IsMember({"erlang", "clt"}));

  auto* bench = app.add_subcommand("bench", "benchmark against the exhaustive oracle");
  add_common(bench);
  add_seed(bench);
  add_jobs(bench);
  bench->add_option("--store", s.store)->required();
  auto* bq = bench->add_option("--queries", s.queries);
  bench->add_option("--rho", s.rho);
  auto* bv = bench->add_option("--variants", s.variants)->delimiter(',')->check(variant_any);
  bench->add_option("--out", s.out, "per-query CSV");
  bench->add_option("--summary", s.summary, "key=value summary, - for stdout");
  auto* bt = bench->add_flag("--theory", s.theory, "add the fitted-model comparison");
  bench->add_option("--samples", s.samples)->check(CLI::Range(std::size_t{100}, std::size_t{1} << 32));
  auto* streaming = bench->add_flag("--streaming", s.streaming, "append/query protocol");
  auto* frac = bench->add_option("--initial-fraction", s.initial_fraction)->check(CLI::Range(0.0, 1.0));
  auto* batch = bench->add_option("--batch", s.batch)->check(CLI::PositiveNumber);
  bench->add_flag("--allow-negative", s.allow_negative);
  streaming->excludes(bq)->excludes(bv)->excludes(bt);
  frac->needs(streaming);
  batch->needs(streaming);

  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo splitting over i.i.d. TNE similarities");
  add_common(simulate);
  add_seed(simulate);
  add_jobs(simulate);
  simulate->add_option("--n", s.n)->required()->check(CLI::Range(std::size_t{2}, std::size_t{1} << 30));
  simulate->add_option("--rho", s.rho)->required()->check(CLI::PositiveNumber);
  simulate->add_option("--lambda", s.lambda)->required()->check(CLI::PositiveNumber);
  simulate->add_option("--trials", s.trials)->check(CLI::PositiveNumber);
  simulate->add_option("--c", s.c, "simulate max pools with this ratio")->check(CLI::Range(1.0, 1e12));

  try {
    app.parse(argc, argv);
    if (query->parsed()) detail::check_rho(s.rho);
    if (bench->parsed()) {
      detail::check_rho(s.rho);
      if (!s.streaming && s.queries.empty()) throw CLI::RequiredError("--queries (or --streaming)");
      if (s.streaming && s.allow_negative) throw CLI::ValidationError("--streaming", "needs a non-negative store");
      if (s.streaming && !(s.initial_fraction > 0.0 && s.initial_fraction < 1.0)) {
        throw CLI::ValidationError("--initial-fraction", "must be in (0, 1)");
      }
    }
    if (gen->parsed()) {
      for (const auto& p : s.plants) detail::parse_plant(p);
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) commands::gen(s, out);
    if (build->parsed()) commands::build(s, out);
    if (append->parsed()) commands::append(s, out);
    if (query->parsed()) commands::query(s, out);
    if (fit->parsed()) commands::fit(s, out);
    if (predict->parsed()) commands::predict(s, out);
    if (bench->parsed()) commands::run_bench(s, out);
    if (simulate->parsed()) commands::simulate(s, out);
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    // An index that no longer matches its store is a bad input file.
    return e.is_io() || e.code() == Errc::kStaleIndex ? kExitIo : kExitUsage;
  } catch (const InvariantViolation& e) {
    err << "invariant violated: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInvariant;
  }
}

}  // namespace gtnn::cli
