// Command-line pipeline: simulate -> fit -> rank -> pvalue -> fdr, plus the
// pooled t-test baseline and a truth-based benchmark harness. Stages exchange
// TSV/JSON files and every output directory carries a run manifest.

#include <CLI11.hpp>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "mixcontrast/contrast.hpp"
#include "mixcontrast/em.hpp"
#include "mixcontrast/errors.hpp"
#include "mixcontrast/expression_matrix.hpp"
#include "mixcontrast/fdr.hpp"
#include "mixcontrast/io.hpp"
#include "mixcontrast/permutation.hpp"
#include "mixcontrast/simulate.hpp"
#include "mixcontrast/stats.hpp"
#include "mixcontrast/ttest.hpp"

namespace fs = std::filesystem;
using namespace mixcontrast;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

std::string out_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory: " + dir);
}

ExpressionMatrix load_and_standardize(const std::string& matrix_path,
                                      const std::string& labels_path) {
  return column_standardize(load_expression_matrix(matrix_path, labels_path));
}

void check_model_digest(const std::string& recorded, const std::string& matrix_path) {
  const std::string actual = file_digest(matrix_path);
  if (!recorded.empty() && recorded != actual) {
    throw DataError("stale model: it was fitted on data with digest " + recorded +
                    " but " + matrix_path + " has digest " + actual +
                    "; refit or point at the original matrix");
  }
}

// "5" or "3..15"
std::pair<int, int> parse_g_range(const std::string& text) {
  const auto pos = text.find("..");
  try {
    if (pos == std::string::npos) {
      const int g = std::stoi(text);
      return {g, g};
    }
    return {std::stoi(text.substr(0, pos)), std::stoi(text.substr(pos + 2))};
  } catch (const std::exception&) {
    throw DomainError("unparseable g range: " + text);
  }
}

struct Preset {
  double delta;
  double rho;
};

Preset lookup_preset(const std::string& name) {
  if (name == "table2-set1") return {2.0, 0.0};
  if (name == "table2-set2") return {2.0, 0.4};
  if (name == "table2-set3") return {3.0, 0.0};
  if (name == "table2-set4") return {3.0, 0.4};
  if (name == "fig3-set1") return {2.0, 0.0};
  if (name == "fig3-set2") return {2.0, 0.4};
  if (name == "fig3-set3") return {2.0, 0.6};
  if (name == "fig3-set4") return {2.0, 0.8};
  throw DomainError("unknown preset: " + name);
}

int run(int argc, char** argv) {
  CLI::App app{"mixture-of-LMM contrast pipeline for differential expression"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  int threads = 0;
  app.add_option("--seed", seed, "master RNG seed")->capture_default_str();
  app.add_option("--threads", threads, "thread cap (0 = all cores)");

  // ---- simulate
  auto* sim = app.add_subcommand("simulate", "generate a correlated-blocks synthetic dataset");
  SimConfig sim_config;
  std::string sim_out, sim_preset;
  sim->add_option("--out", sim_out, "output directory")->required();
  sim->add_option("--preset", sim_preset, "table2-set1..4 or fig3-set1..4");
  sim->add_option("--n", sim_config.n, "feature count")->capture_default_str();
  sim->add_option("--p1", sim_config.p1, "class-1 samples")->capture_default_str();
  sim->add_option("--p2", sim_config.p2, "class-2 samples")->capture_default_str();
  sim->add_option("--block-size", sim_config.block_size)->capture_default_str();
  sim->add_option("--blocks", sim_config.n_blocks)->capture_default_str();
  sim->add_option("--delta", sim_config.delta, "DE effect size")->capture_default_str();
  sim->add_option("--rho", sim_config.rho_sim, "within-block correlation")->capture_default_str();
  sim->add_option("--de-fraction", sim_config.de_fraction)->capture_default_str();
  sim->add_flag("--stratify-blocks", sim_config.stratify_blocks,
                "spread DE picks evenly across blocks");

  // ---- fit
  auto* fit = app.add_subcommand("fit", "standardize and fit the mixture of LMMs");
  std::string fit_data, fit_labels, fit_out, fit_g = "1..6";
  EmConfig em_config;
  fit->add_option("--data", fit_data, "matrix TSV")->required();
  fit->add_option("--labels", fit_labels, "labels TSV")->required();
  fit->add_option("--out", fit_out, "output directory")->required();
  fit->add_option("--g", fit_g, "component count or range, e.g. 5 or 3..15")->capture_default_str();
  fit->add_option("--max-iter", em_config.max_iter)->capture_default_str();
  fit->add_option("--rel-tol", em_config.rel_tol)->capture_default_str();
  fit->add_option("--starts", em_config.n_starts)->capture_default_str();

  // ---- rank
  auto* rank = app.add_subcommand("rank", "score and rank features by the weighted contrast");
  std::string rank_data, rank_labels, rank_model, rank_out;
  rank->add_option("--data", rank_data)->required();
  rank->add_option("--labels", rank_labels)->required();
  rank->add_option("--model", rank_model, "model JSON from fit")->required();
  rank->add_option("--out", rank_out)->required();

  // ---- pvalue
  auto* pvalue = app.add_subcommand("pvalue", "permutation null and per-feature P-values");
  std::string pv_data, pv_labels, pv_model, pv_out;
  int pv_perms = 50;
  bool pv_dump = false;
  pvalue->add_option("--data", pv_data)->required();
  pvalue->add_option("--labels", pv_labels)->required();
  pvalue->add_option("--model", pv_model)->required();
  pvalue->add_option("--out", pv_out)->required();
  pvalue->add_option("--perms", pv_perms, "number of permutations")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  pvalue->add_flag("--dump-replicates", pv_dump, "write the gene x permutation replicate TSV");

  // ---- fdr
  auto* fdr_cmd = app.add_subcommand("fdr", "multiple-testing control on a pvalue run");
  std::string fdr_scores, fdr_out, fdr_method = "bh";
  double fdr_alpha = 0.05, fdr_c0 = 0.1;
  bool fdr_theoretical = false;
  fdr_cmd->add_option("--scores", fdr_scores, "pvalues TSV from the pvalue stage")->required();
  fdr_cmd->add_option("--out", fdr_out)->required();
  fdr_cmd->add_option("--method", fdr_method, "bh or localfdr")->capture_default_str();
  fdr_cmd->add_option("--alpha", fdr_alpha, "BH target FDR")->capture_default_str();
  fdr_cmd->add_option("--c0", fdr_c0, "local-FDR threshold")->capture_default_str();
  fdr_cmd->add_flag("--theoretical-null", fdr_theoretical, "pin the null component at N(0,1)");

  // ---- ttest
  auto* ttest = app.add_subcommand("ttest", "pooled two-sample t baseline ranking");
  std::string tt_data, tt_labels, tt_out;
  ttest->add_option("--data", tt_data)->required();
  ttest->add_option("--labels", tt_labels)->required();
  ttest->add_option("--out", tt_out)->required();

  // ---- benchmark
  auto* bench = app.add_subcommand("benchmark", "truth-based metrics for one or more score files");
  std::string bench_truth, bench_data, bench_labels, bench_out;
  std::vector<std::string> bench_scores;
  int bench_top = 600;
  bench->add_option("--truth", bench_truth, "truth TSV from simulate")->required();
  bench->add_option("--data", bench_data, "matrix TSV the truth belongs to")->required();
  bench->add_option("--labels", bench_labels)->required();
  bench->add_option("--scores", bench_scores, "ranked/score TSVs (W column)")->required();
  bench->add_option("--top", bench_top, "cut-off rank for the metric rows")->capture_default_str();
  bench->add_option("--out", bench_out)->required();

  for (CLI::App* s : app.get_subcommands([](const CLI::App*) { return true; })) {
    s->fallthrough();
  }
  CLI11_PARSE(app, argc, argv);
  if (threads > 0) set_max_threads(threads);

  Timer timer;
  RunManifest manifest;
  manifest.seed = seed;

  if (*sim) {
    ensure_out_dir(sim_out);
    if (!sim_preset.empty()) {
      const Preset preset = lookup_preset(sim_preset);
      sim_config.delta = preset.delta;
      sim_config.rho_sim = preset.rho;
    }
    sim_config.seed = seed;
    auto [data, truth] = generate_dataset(sim_config);
    save_expression_matrix(data, out_path(sim_out, "matrix.tsv"), out_path(sim_out, "labels.tsv"));
    save_truth(truth, data.feature_ids, out_path(sim_out, "truth.tsv"));
    manifest.command = "simulate";
    manifest.config = {{"n", sim_config.n},       {"p1", sim_config.p1},
                       {"p2", sim_config.p2},     {"delta", sim_config.delta},
                       {"rho", sim_config.rho_sim}, {"preset", sim_preset},
                       {"de_fraction", sim_config.de_fraction},
                       {"stratify_blocks", sim_config.stratify_blocks}};
    manifest.wall_time_sec = timer.seconds();
    save_manifest(manifest, out_path(sim_out, "manifest.json"));
    std::cout << "wrote " << sim_out << " (n=" << sim_config.n << ", delta=" << sim_config.delta
              << ", rho=" << sim_config.rho_sim << ")\n";
  } else if (*fit) {
    ensure_out_dir(fit_out);
    const auto [g_lo, g_hi] = parse_g_range(fit_g);
    em_config.g_min = g_lo;
    em_config.g_max = g_hi;
    em_config.seed = seed;
    const ExpressionMatrix data = load_and_standardize(fit_data, fit_labels);
    MixtureModel model;
    std::vector<GBicRow> table;
    if (g_lo == g_hi) {
      auto [m, trace] = fit_mixture(data, g_lo, em_config);
      model = std::move(m);
      GBicRow row;
      row.g = model.g;
      row.log_likelihood = model.log_likelihood;
      row.bic = model.bic;
      row.converged = trace.converged;
      row.iterations = trace.iterations;
      table.push_back(row);
    } else {
      auto [m, t] = select_g(data, em_config);
      model = std::move(m);
      table = std::move(t);
    }
    const std::string tau_path = out_path(fit_out, "tau.tsv");
    save_model(model, out_path(fit_out, "model.json"), tau_path, file_digest(fit_data), seed);
    save_bic_table(table, out_path(fit_out, "bic.tsv"));
    manifest.command = "fit";
    manifest.config = {{"g", fit_g}, {"max_iter", em_config.max_iter},
                       {"rel_tol", em_config.rel_tol}, {"starts", em_config.n_starts}};
    manifest.inputs = {{fit_data, file_digest(fit_data)}, {fit_labels, file_digest(fit_labels)}};
    manifest.wall_time_sec = timer.seconds();
    save_manifest(manifest, out_path(fit_out, "manifest.json"));
    std::cout << "fitted g=" << model.g << " loglik=" << model.log_likelihood
              << " bic=" << model.bic << '\n';
  } else if (*rank) {
    ensure_out_dir(rank_out);
    const ExpressionMatrix data = load_and_standardize(rank_data, rank_labels);
    std::string digest;
    const MixtureModel model = load_model(rank_model, data.class_of_sample, &digest);
    check_model_digest(digest, rank_data);
    const RandomEffectsEstimates estimates = estimate_blups(data, model);
    const StatisticTable stats = compute_statistics(data, model, estimates);
    const std::vector<RankedGene> ranked = rank_genes(stats.w);
    save_ranked_tsv(ranked, data.feature_ids, model.z_map, stats.tau,
                    out_path(rank_out, "ranked.tsv"));
    manifest.command = "rank";
    manifest.config = {{"model", rank_model}};
    manifest.inputs = {{rank_data, file_digest(rank_data)}, {rank_model, file_digest(rank_model)}};
    manifest.wall_time_sec = timer.seconds();
    save_manifest(manifest, out_path(rank_out, "manifest.json"));
    std::cout << "ranked " << data.n() << " features\n";
  } else if (*pvalue) {
    ensure_out_dir(pv_out);
    const ExpressionMatrix data = load_and_standardize(pv_data, pv_labels);
    std::string digest;
    const MixtureModel model = load_model(pv_model, data.class_of_sample, &digest);
    check_model_digest(digest, pv_data);
    const RandomEffectsEstimates estimates = estimate_blups(data, model);
    const StatisticTable stats = compute_statistics(data, model, estimates);
    const PermutationPlan plan = permute_labels(data.class_of_sample, pv_perms, seed);
    const Eigen::MatrixXd reps = replicate_statistics(data, model, estimates, plan);
    std::vector<double> pooled(reps.data(), reps.data() + reps.size());
    const NullDistribution null = fit_t_df(pooled);
    const Eigen::VectorXd p = p_values(stats.w, null);

    std::ofstream pf(out_path(pv_out, "pvalues.tsv"));
    pf << "feature_id\tW\tP\n";
    for (Eigen::Index j = 0; j < data.n(); ++j) {
      pf << data.feature_ids[static_cast<std::size_t>(j)] << '\t' << fmt_g17(stats.w[j])
         << '\t' << fmt_g17(p[j]) << '\n';
    }
    nlohmann::json null_doc = {{"mu", null.mu}, {"s", null.s}, {"nu", null.nu},
                               {"B", plan.B},
                               {"pooled_count", static_cast<long long>(pooled.size())},
                               {"sampled_with_replacement", plan.sampled_with_replacement}};
    std::ofstream nf(out_path(pv_out, "null.json"));
    nf << null_doc.dump(2) << '\n';
    if (pv_dump) {
      std::ofstream rf(out_path(pv_out, "replicates.tsv"));
      for (Eigen::Index j = 0; j < reps.rows(); ++j) {
        rf << data.feature_ids[static_cast<std::size_t>(j)];
        for (Eigen::Index b = 0; b < reps.cols(); ++b) rf << '\t' << fmt_g17(reps(j, b));
        rf << '\n';
      }
    }
    manifest.command = "pvalue";
    manifest.config = {{"perms", pv_perms}, {"model", pv_model}};
    manifest.inputs = {{pv_data, file_digest(pv_data)}, {pv_model, file_digest(pv_model)}};
    manifest.wall_time_sec = timer.seconds();
    save_manifest(manifest, out_path(pv_out, "manifest.json"));
    std::cout << "null fit: mu=" << null.mu << " s=" << null.s << " nu=" << null.nu << '\n';
  } else if (*fdr_cmd) {
    ensure_out_dir(fdr_out);
    if (fdr_method != "bh" && fdr_method != "localfdr") {
      throw DomainError("--method must be bh or localfdr");
    }
    const ScoreFile w_file = load_score_file(fdr_scores, "W");
    const ScoreFile p_file = load_score_file(fdr_scores, "P");
    const Eigen::Index n = static_cast<Eigen::Index>(p_file.scores.size());
    const Eigen::VectorXd p = Eigen::Map<const Eigen::VectorXd>(p_file.scores.data(), n);
    const BhResult bh = benjamini_hochberg(p, fdr_alpha);
    const Eigen::VectorXd z = z_scores(p);
    const TwoNormalFit two = fit_two_normal_mixture(z, fdr_theoretical);
    const LocalFdrSelection lf = select_by_local_fdr(two.local_fdr, fdr_c0);
    const std::vector<bool>& selected = fdr_method == "bh" ? bh.selected : lf.selected;

    std::ofstream rf(out_path(fdr_out, "results.tsv"));
    rf << "feature_id\tW\tP\tz\tlocal_fdr\tbh_q\tselected\n";
    int n_sel = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const bool sel = selected[static_cast<std::size_t>(j)];
      n_sel += sel;
      rf << p_file.feature_ids[static_cast<std::size_t>(j)] << '\t'
         << fmt_g17(w_file.scores[static_cast<std::size_t>(j)]) << '\t' << fmt_g17(p[j])
         << '\t' << fmt_g17(z[j]) << '\t' << fmt_g17(two.local_fdr[j]) << '\t'
         << fmt_g17(bh.q[j]) << '\t' << (sel ? 1 : 0) << '\n';
    }
    manifest.command = "fdr";
    manifest.config = {{"method", fdr_method}, {"alpha", fdr_alpha}, {"c0", fdr_c0},
                       {"theoretical_null", fdr_theoretical}};
    manifest.inputs = {{fdr_scores, file_digest(fdr_scores)}};
    manifest.wall_time_sec = timer.seconds();
    save_manifest(manifest, out_path(fdr_out, "manifest.json"));
    std::cout << "selected " << n_sel << " of " << n << " features (method=" << fdr_method
              << ", pi0=" << two.pi0 << ", implied FDR=" << lf.implied_fdr << ")\n";
  } else if (*ttest) {
    ensure_out_dir(tt_out);
    const ExpressionMatrix data = load_and_standardize(tt_data, tt_labels);
    const TTestResult res = pooled_t(data);
    // same ranked schema as the contrast output so benchmark can ingest both
    Eigen::VectorXd finite_t = res.t;
    for (Eigen::Index j = 0; j < finite_t.size(); ++j) {
      if (std::isinf(finite_t[j])) finite_t[j] = std::copysign(1e300, finite_t[j]);
    }
    const std::vector<RankedGene> ranked = rank_genes(finite_t);
    std::ofstream f(out_path(tt_out, "ttest.tsv"));
    f << "feature_id\trank\tW\tdirection\tmap_cluster\tP\n";
    for (const auto& r : ranked) {
      f << data.feature_ids[static_cast<std::size_t>(r.feature)] << '\t' << r.rank << '\t'
        << fmt_g17(res.t[r.feature]) << '\t' << (r.up ? "up" : "down") << "\t0\t"
        << fmt_g17(res.p[r.feature]) << '\n';
    }
    manifest.command = "ttest";
    manifest.config = nlohmann::json::object();
    manifest.inputs = {{tt_data, file_digest(tt_data)}};
    manifest.wall_time_sec = timer.seconds();
    save_manifest(manifest, out_path(tt_out, "manifest.json"));
    std::cout << "wrote t-test ranking for " << data.n() << " features\n";
  } else if (*bench) {
    ensure_out_dir(bench_out);
    const ExpressionMatrix data = load_expression_matrix(bench_data, bench_labels);
    const SimulationTruth truth = load_truth(bench_truth, data.feature_ids);
    std::map<std::string, Eigen::Index> row_of;
    for (std::size_t j = 0; j < data.feature_ids.size(); ++j) {
      row_of[data.feature_ids[j]] = static_cast<Eigen::Index>(j);
    }

    std::ofstream mf(out_path(bench_out, "metrics.tsv"));
    mf << "scores\ttop_k\tn_selected\tFDP\tFNDP\tpower\n";
    for (const auto& path : bench_scores) {
      const ScoreFile sf = load_score_file(path, "W");
      if (sf.feature_ids.size() != data.feature_ids.size()) {
        throw DataError("score file row count does not match the data: " + path);
      }
      Eigen::VectorXd scores(static_cast<Eigen::Index>(sf.scores.size()));
      std::vector<Eigen::Index> rows(sf.scores.size());
      for (std::size_t k = 0; k < sf.scores.size(); ++k) {
        auto it = row_of.find(sf.feature_ids[k]);
        if (it == row_of.end()) throw DataError("unknown feature id in " + path + ": " + sf.feature_ids[k]);
        rows[k] = it->second;
        scores[static_cast<Eigen::Index>(k)] = sf.scores[k];
      }
      const std::vector<RankedGene> ranked = rank_genes(scores);
      std::vector<Eigen::Index> order;
      order.reserve(ranked.size());
      for (const auto& r : ranked) order.push_back(rows[static_cast<std::size_t>(r.feature)]);

      std::vector<bool> selected(static_cast<std::size_t>(data.n()), false);
      for (int k = 0; k < bench_top; ++k) selected[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = true;
      const EvaluationMetrics metrics = evaluate_against_truth(selected, truth);
      const std::vector<double> curve = fdp_curve(order, truth, bench_top);

      const std::string stem = fs::path(path).stem().string();
      mf << stem << '\t' << bench_top << '\t' << metrics.n_selected << '\t'
         << fmt_g17(metrics.fdp) << '\t' << fmt_g17(metrics.fndp) << '\t'
         << fmt_g17(metrics.power) << '\n';
      std::ofstream cf(out_path(bench_out, "curve_" + stem + ".tsv"));
      cf << "k\tFDP\n";
      for (std::size_t k = 0; k < curve.size(); ++k) {
        cf << (k + 1) << '\t' << fmt_g17(curve[k]) << '\n';
      }
      std::cout << stem << ": FDP=" << metrics.fdp << " power=" << metrics.power
                << " at top " << bench_top << '\n';
    }
    manifest.command = "benchmark";
    manifest.config = {{"top", bench_top}};
    manifest.inputs = {{bench_truth, file_digest(bench_truth)}};
    for (const auto& path : bench_scores) manifest.inputs.emplace_back(path, file_digest(path));
    manifest.wall_time_sec = timer.seconds();
    save_manifest(manifest, out_path(bench_out, "manifest.json"));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
