// koala: command line front end for the dual-metric detector.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "koala/attack.hpp"
#include "koala/constrained_max.hpp"
#include "koala/errors.hpp"
#include "koala/eval.hpp"
#include "koala/fixtures.hpp"
#include "koala/parallel.hpp"
#include "koala/theorem.hpp"
#include "koala/trainer.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using namespace koala;

namespace {

constexpr double kOracleTolerance = 5e-3;

struct Common {
  unsigned threads = 1;
  int status = 0;  // non-error exit status a subcommand may set
};

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

PrototypeSet load_protos(const fs::path& path) {
  return PrototypeSet::from_dataset(read_dataset(path));
}

// Every option of the subcommand, given or defaulted, plus --threads.
cli::RunManifest manifest_for(const CLI::App& sub, const Common& common,
                              std::vector<fs::path> inputs,
                              std::optional<std::uint64_t> seed = std::nullopt) {
  cli::RunManifest m;
  m.subcommand = sub.get_name();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_name(false, true);
    if (name.empty() || name == "--help") continue;
    if (opt->count() > 0) {
      std::string joined;
      for (const auto& r : opt->results()) joined += (joined.empty() ? "" : ",") + r;
      m.flags[name] = opt->get_expected_min() == 0 ? "true" : joined;
    } else if (!opt->get_default_str().empty()) {
      m.flags[name] = opt->get_default_str();
    }
  }
  m.flags["--threads"] = std::to_string(common.threads);
  m.seed = seed;
  m.inputs = std::move(inputs);
  return m;
}

// ---------------------------------------------------------------- subcommands

void add_fit_prototypes(CLI::App& app, Common& common) {
  auto* sub = app.add_subcommand("fit-prototypes", "class-mean prototypes of a clean dataset");
  static fs::path input, output;
  sub->add_option("--input", input, "clean embeddings (.csv or .ked)")->required();
  sub->add_option("--output", output, "prototype file (.csv or .ked)")->required();
  sub->callback([sub, &common] {
    const auto protos = fit_prototypes(read_dataset(input));
    write_dataset(protos.to_dataset(), output);
    manifest_for(*sub, common, {input}).write_for(output);
    std::cout << "fitted " << protos.classes() << " prototypes, d=" << protos.dim() << '\n';
  });
}

void add_detect(CLI::App& app, Common& common) {
  auto* sub = app.add_subcommand("detect", "flag samples whose heads disagree");
  static fs::path protos_path, input, output;
  static std::string heads = "kl,l0";
  static L0Params params;
  sub->add_option("--protos", protos_path)->required();
  sub->add_option("--input", input)->required();
  sub->add_option("--heads", heads, "comma list of kl, l0, cosine")->capture_default_str();
  sub->add_option("--tau", params.tau)->capture_default_str();
  sub->add_option("--phi", params.phi)->capture_default_str();
  sub->add_option("--output", output, "predictions CSV")->required();
  sub->callback([sub, &common] {
    params.validate();
    const auto protos = load_protos(protos_path);
    const auto rows = predict_rows(read_dataset(input), protos, HeadSelection::parse(heads),
                                   params, common.threads);
    {
      auto out = open_output(output);
      write_predictions_csv(rows, out);
    }
    manifest_for(*sub, common, {protos_path, input}).write_for(output);
    std::size_t flagged = 0;
    for (const auto& r : rows) flagged += r.outcome.attack ? 1 : 0;
    std::cout << flagged << "/" << rows.size() << " flagged\n";
  });
}

void add_evaluate(CLI::App& app, Common& common) {
  auto* sub = app.add_subcommand("evaluate", "confusion counts and scores of a predictions CSV");
  static fs::path preds, compliance, report, kv;
  sub->add_option("--preds", preds)->required();
  sub->add_option("--compliance", compliance, "check-theorem CSV; enables the split reports");
  sub->add_option("--out-report", report)->required();
  sub->add_option("--out-kv", kv, "key=value report (default: <out-report>.kv)");
  sub->callback([sub, &common] {
    auto in = open_input(preds);
    const auto rows = read_predictions_csv(in);
    std::map<std::string, bool> verdicts;
    std::vector<fs::path> inputs{preds};
    if (!compliance.empty()) {
      auto cin = open_input(compliance);
      verdicts = read_compliance_csv(cin);
      inputs.push_back(compliance);
    }
    const auto split = split_report(rows, verdicts);
    const fs::path kv_path = kv.empty() ? fs::path(report.string() + ".kv") : kv;
    {
      auto out = open_output(report);
      write_report_text(split, out);
      auto kv_out = open_output(kv_path);
      write_report_kv(split, kv_out);
    }
    const auto m = manifest_for(*sub, common, inputs);
    m.write_for(report);
    m.write_for(kv_path);
    write_report_text(split, std::cout);
  });
}

void add_check_theorem(CLI::App& app, Common& common) {
  auto* sub = app.add_subcommand("check-theorem", "per-sample compliance with the exclusion bound");
  static fs::path protos_path, input, output;
  static double epsilon = 0.0, tau = L0Params{}.tau;
  sub->add_option("--protos", protos_path)->required();
  sub->add_option("--input", input)->required();
  sub->add_option("--epsilon", epsilon, "embedding-space L2 budget")->required();
  sub->add_option("--tau", tau)->capture_default_str();
  sub->add_option("--out", output)->required();
  sub->callback([sub, &common] {
    const auto protos = load_protos(protos_path);
    const auto ds = read_dataset(input);
    std::vector<std::size_t> clean;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (!ds[i].attacked) clean.push_back(i);
    }
    std::vector<ComplianceReport> reports(clean.size());
    parallel_for(clean.size(), common.threads, [&](std::size_t i) {
      const auto& row = ds[clean[i]];
      reports[i] = classify_compliance(row.embedding, row.label, protos, epsilon, tau);
    });
    std::size_t compliant = 0;
    {
      auto out = open_output(output);
      out << "id,compliant,witness_j,gamma_j,gap_j,tau_lo,tau_hi,weakest_rival\n";
      for (std::size_t i = 0; i < clean.size(); ++i) {
        const auto& r = reports[i];
        compliant += r.compliant ? 1 : 0;
        out << ds[clean[i]].id << ',' << (r.compliant ? 1 : 0) << ',';
        if (r.witness_coordinate) out << *r.witness_coordinate;
        out << ',' << (r.witness_coordinate ? format_double(r.gamma_j) : "") << ','
            << (r.witness_coordinate ? format_double(r.gap_j) : "") << ','
            << (r.tau_interval ? format_double(r.tau_interval->first) : "") << ','
            << (r.tau_interval ? format_double(r.tau_interval->second) : "") << ',';
        if (r.worst_adversary_class >= 0) out << r.worst_adversary_class;
        out << '\n';
      }
    }
    manifest_for(*sub, common, {protos_path, input}).write_for(output);
    std::cout << compliant << "/" << clean.size() << " compliant\n";
  });
}

struct AttackFlags {
  double epsilon = 0.0;
  std::string mode = "dual";
  AttackOptions options;
};

void add_attack_flags(CLI::App* sub, AttackFlags& f, bool with_mode) {
  sub->add_option("--epsilon", f.epsilon, "embedding-space L2 budget")->required();
  sub->add_option("--tau", f.options.params.tau)->capture_default_str();
  sub->add_option("--phi", f.options.params.phi)->capture_default_str();
  sub->add_option("--budget", f.options.budget.random_directions, "random directions")
      ->capture_default_str();
  sub->add_option("--restarts", f.options.budget.ascent_restarts, "ascent restarts")
      ->capture_default_str();
  sub->add_option("--seed", f.options.seed)->capture_default_str();
  if (with_mode) {
    sub->add_option("--mode", f.mode, "kl, l0 or dual")->capture_default_str();
    sub->add_flag("--free-delta", f.options.free_delta, "drop the sum-zero constraint");
  }
}

void add_attack(CLI::App& app, Common& common) {
  auto* sub = app.add_subcommand("attack", "search epsilon-bounded head flips per sample");
  static fs::path protos_path, input, output, dataset_out;
  static AttackFlags f;
  sub->add_option("--protos", protos_path)->required();
  sub->add_option("--input", input)->required();
  add_attack_flags(sub, f, true);
  sub->add_option("--out", output)->required();
  sub->add_option("--out-dataset", dataset_out, "clean rows plus attacked twins");
  sub->callback([sub, &common] {
    f.options.mode = parse_attack_mode(f.mode);
    f.options.params.validate();
    const auto protos = load_protos(protos_path);
    const auto ds = read_dataset(input);
    std::vector<AttackResult> results(ds.size());
    parallel_for(ds.size(), common.threads, [&](std::size_t i) {
      results[i] = search_attack(ds[i].embedding, ds[i].label, protos, f.epsilon, f.options, i);
    });
    std::size_t dual = 0;
    {
      auto out = open_output(output);
      out << "id,flipped_kl,flipped_l0,dual_flip,delta_norm\n";
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& r = results[i];
        dual += r.dual_flip_same_class ? 1 : 0;
        out << ds[i].id << ',' << (r.flipped_kl ? 1 : 0) << ',' << (r.flipped_l0 ? 1 : 0) << ','
            << (r.dual_flip_same_class ? 1 : 0) << ',' << format_double(r.delta.norm()) << '\n';
      }
    }
    const auto m = manifest_for(*sub, common, {protos_path, input}, f.options.seed);
    m.write_for(output);
    if (!dataset_out.empty()) {
      write_dataset(craft_attacked_dataset(ds, protos, f.epsilon, f.options, common.threads),
                    dataset_out);
      m.write_for(dataset_out);
    }
    std::cout << dual << "/" << ds.size() << " dual flips\n";
  });
}

void add_verify_exclusion(CLI::App& app, Common& common) {
  auto* sub = app.add_subcommand(
      "verify-exclusion", "search dual flips on compliant and non-compliant samples");
  static fs::path protos_path, input, output;
  static AttackFlags f;
  sub->add_option("--protos", protos_path)->required();
  sub->add_option("--input", input)->required();
  add_attack_flags(sub, f, false);
  sub->add_option("--out", output)->required();
  sub->callback([sub, &common] {
    f.options.params.validate();
    const auto protos = load_protos(protos_path);
    const auto ds = read_dataset(input);
    std::vector<std::size_t> clean;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (!ds[i].attacked) clean.push_back(i);
    }
    std::vector<ComplianceReport> reports(clean.size());
    std::vector<AttackResult> results(clean.size());
    parallel_for(clean.size(), common.threads, [&](std::size_t i) {
      const auto& row = ds[clean[i]];
      reports[i] = classify_compliance(row.embedding, row.label, protos, f.epsilon,
                                       f.options.params.tau);
      results[i] = search_dual_flip(row.embedding, row.label, protos, f.epsilon, f.options,
                                    clean[i]);
    });
    std::size_t n_yes = 0, flips_yes = 0, flips_no = 0;
    {
      auto out = open_output(output);
      out << "id,compliant,dual_flip,kl_class,l0_class\n";
      for (std::size_t i = 0; i < clean.size(); ++i) {
        const bool yes = reports[i].compliant;
        const bool flip = results[i].dual_flip_same_class;
        n_yes += yes ? 1 : 0;
        (yes ? flips_yes : flips_no) += flip ? 1 : 0;
        out << ds[clean[i]].id << ',' << (yes ? 1 : 0) << ',' << (flip ? 1 : 0) << ','
            << results[i].kl_class << ',' << results[i].l0_class << '\n';
      }
    }
    manifest_for(*sub, common, {protos_path, input}, f.options.seed).write_for(output);
    std::cout << "compliant " << n_yes << ": " << flips_yes << " dual flips; non-compliant "
              << clean.size() - n_yes << ": " << flips_no << " dual flips\n";
    // A dual flip on a compliant sample contradicts the exclusion bound.
    if (flips_yes > 0) common.status = 3;
  });
}

void add_train(CLI::App& app, Common& common) {
  auto* sub = app.add_subcommand("train", "fit the affine softmax encoder with both losses");
  static fs::path data, encoder_out, protos_out, history_out;
  static Index f = 0, d = 0;
  static int m = 0;
  static TrainConfig cfg;
  sub->add_option("--data", data, "features CSV (label,x0..)")->required();
  sub->add_option("--f", f, "feature dimension")->required();
  sub->add_option("--d", d, "embedding dimension")->required();
  sub->add_option("--m", m, "classes")->required();
  sub->add_option("--w-l0", cfg.w_l0)->capture_default_str();
  sub->add_option("--w-kl", cfg.w_kl)->capture_default_str();
  sub->add_option("--tau", cfg.params.tau)->capture_default_str();
  sub->add_option("--phi", cfg.params.phi)->capture_default_str();
  sub->add_option("--lr", cfg.learning_rate)->capture_default_str();
  sub->add_option("--epochs", cfg.epochs)->capture_default_str();
  sub->add_option("--batch", cfg.batch_size, "0 = full batch")->capture_default_str();
  sub->add_option("--seed", cfg.seed)->capture_default_str();
  sub->add_option("--out-encoder", encoder_out)->required();
  sub->add_option("--out-protos", protos_out)->required();
  sub->add_option("--out-history", history_out, "epoch,L_KL,L_L0,total");
  sub->callback([sub, &common] {
    auto in = open_input(data);
    const auto samples = read_features_csv(in);
    if (!samples.empty() && samples.front().x.size() != f) {
      throw DimensionError("--f " + std::to_string(f) + " but data has " +
                           std::to_string(samples.front().x.size()) + " features");
    }
    const auto res = train(samples, m, d, cfg);
    write_encoder(res.encoder, encoder_out);
    write_dataset(res.protos.to_dataset(), protos_out);
    const auto man = manifest_for(*sub, common, {data}, cfg.seed);
    man.write_for(encoder_out);
    man.write_for(protos_out);
    if (!history_out.empty()) {
      {
        auto out = open_output(history_out);
        write_history_csv(res.history, out);
      }
      man.write_for(history_out);
    }
    std::size_t agree = 0;
    for (const auto& s : samples) {
      const auto o = detect(forward(res.encoder, s.x).values(), res.protos,
                            HeadSelection::kl_l0(), cfg.params);
      agree += (!o.attack && *o.predicted == s.label) ? 1 : 0;
    }
    std::cout << "clean dual-head agreement " << agree << "/" << samples.size() << '\n';
  });
}

void add_oracle_check(CLI::App& app, Common& common) {
  auto* sub = app.add_subcommand("oracle-check",
                                 "closed-form constrained max vs brute-force grid search");
  static Index dim = 3;
  static int trials = 1000;
  static std::uint64_t seed = 0;
  static fs::path output;
  sub->add_option("--dim", dim, "2, 3 or 4")->capture_default_str();
  sub->add_option("--trials", trials)->capture_default_str();
  sub->add_option("--seed", seed)->capture_default_str();
  sub->add_option("--out", output, "per-trial CSV");
  sub->callback([sub, &common] {
    if (dim < 2 || dim > 4) throw InvalidInput("--dim must be 2, 3 or 4");
    if (trials < 1) throw InvalidInput("--trials must be >= 1");
    std::mt19937_64 rng(seed);
    std::vector<ConstrainedMaxProblem> problems;
    for (int t = 0; t < trials; ++t) problems.push_back(random_constrained_problem(dim, rng));
    struct Row {
      double closed = 0, brute = 0, violation = 0;
      bool found = false;
    };
    std::vector<Row> rows(problems.size());
    parallel_for(problems.size(), common.threads, [&](std::size_t i) {
      const auto cf = solve_closed_form(problems[i]);
      const auto bf = brute_force_max(problems[i]);
      rows[i] = {cf.objective, bf.objective, feasibility_violation(problems[i], cf.delta),
                 bf.found};
    });
    int within = 0;
    for (const auto& r : rows) {
      within += (r.found && std::abs(r.closed - r.brute) <= kOracleTolerance &&
                 r.violation <= 1e-9) ? 1 : 0;
    }
    if (!output.empty()) {
      {
        auto out = open_output(output);
        out << "trial,k,closed_form,brute_force,gap,violation\n";
        for (std::size_t i = 0; i < rows.size(); ++i) {
          out << i << ',' << problems[i].k << ',' << format_double(rows[i].closed) << ','
              << (rows[i].found ? format_double(rows[i].brute) : "") << ','
              << (rows[i].found ? format_double(rows[i].closed - rows[i].brute) : "") << ','
              << format_double(rows[i].violation) << '\n';
        }
      }
      manifest_for(*sub, common, {}, seed).write_for(output);
    }
    std::cout << within << "/" << trials << " within 5e-3\n";
  });
}

void add_gen_synthetic(CLI::App& app, Common& common) {
  auto* sub = app.add_subcommand("gen-synthetic", "synthetic embeddings or raw feature clusters");
  static int classes = 3;
  static Index dim = 8, features = 0;
  static double separation = 0.2, noise = 0.05, spread = 6.0;
  static std::size_t n = 60;
  static std::uint64_t seed = 0;
  static fs::path output, protos_out;
  sub->add_option("--classes", classes)->capture_default_str();
  sub->add_option("--dim", dim, "embedding dimension")->capture_default_str();
  sub->add_option("--separation", separation, "prototype bump in [0, 1)")->capture_default_str();
  sub->add_option("--noise", noise, "log-normal sample noise")->capture_default_str();
  sub->add_option("--n", n, "total samples")->capture_default_str();
  sub->add_option("--seed", seed)->capture_default_str();
  sub->add_option("--features", features,
                  "emit F-dimensional Gaussian feature clusters for train instead");
  sub->add_option("--spread", spread, "cluster center distance (with --features)")
      ->capture_default_str();
  sub->add_option("--out", output)->required();
  sub->add_option("--out-protos", protos_out, "generating prototypes");
  sub->callback([sub, &common] {
    const auto man = manifest_for(*sub, common, {}, seed);
    if (features > 0) {
      {
        auto out = open_output(output);
        write_features_csv(gaussian_clusters(classes, features, n, spread, seed), out);
      }
      man.write_for(output);
      return;
    }
    if (classes < 1 || n % static_cast<std::size_t>(classes) != 0) {
      throw InvalidInput("--n must be a positive multiple of --classes");
    }
    const auto inst = generate_separable_instance(classes, dim, separation, seed,
                                                  n / static_cast<std::size_t>(classes), noise);
    write_dataset(inst.data, output);
    man.write_for(output);
    if (!protos_out.empty()) {
      write_dataset(inst.protos.to_dataset(), protos_out);
      man.write_for(protos_out);
    }
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"koala: KL / thresholded-L0 dual-head adversarial detector"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--threads", common.threads, "worker threads (output does not depend on it)")
      ->check(CLI::Range(1u, 256u));

  add_fit_prototypes(app, common);
  add_detect(app, common);
  add_evaluate(app, common);
  add_check_theorem(app, common);
  add_attack(app, common);
  add_verify_exclusion(app, common);
  add_train(app, common);
  add_oracle_check(app, common);
  add_gen_synthetic(app, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: E_USAGE: " << e.what() << '\n';
    const CLI::App* failed = &app;
    for (const auto* sub : app.get_subcommands()) failed = sub;
    std::cerr << failed->help();
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << error_code_name(e.code()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: E_INTERNAL: " << e.what() << '\n';
    return 1;
  }
  return common.status;
}
