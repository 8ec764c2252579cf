#include "sail/app.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "pipeline.hpp"
#include "render.hpp"
#include "sail/chat_client.hpp"
#include "sail/errors.hpp"
#include "sail/interp.hpp"
#include "sail/retrieval.hpp"
#include "workspace.hpp"

#ifndef SAIL_VERSION_STRING
#define SAIL_VERSION_STRING "unknown"
#endif

namespace sail::app {
namespace {

using nlohmann::json;

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Desk-scale defaults; full-scale values live in configs/full_scale.toml.
TrainConfig default_train_config() {
  TrainConfig tc;
  tc.lr0 = 1e-2;
  tc.lr_min = 1e-4;
  tc.epochs = 30;
  tc.batch_size = 16;
  return tc;
}

json train_config_json(const TrainConfig& tc) {
  return {{"lr0", tc.lr0},           {"lr_min", tc.lr_min},         {"epochs", tc.epochs},
          {"batch_size", tc.batch_size}, {"adam_beta1", tc.adam_beta1}, {"adam_beta2", tc.adam_beta2},
          {"adam_eps", tc.adam_eps},  {"threshold_momentum", tc.threshold_momentum}};
}

json eval_options_json(const EvalOptions& e) {
  return {{"split", e.split},         {"level", e.level},          {"recovery_n", e.recovery_n},
          {"probe_l2", e.probe.l2},   {"probe_max_iters", e.probe.max_iters}, {"probe_tol", e.probe.tol},
          {"min_prevalence", e.min_prevalence}, {"null_pairs", e.null_pairs}};
}

void add_train_flags(CLI::App* cmd, TrainConfig& tc) {
  cmd->add_option("--epochs", tc.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--batch-size", tc.batch_size, "Samples per step")->capture_default_str();
  cmd->add_option("--lr", tc.lr0, "Initial learning rate")->capture_default_str();
  cmd->add_option("--lr-min", tc.lr_min, "Final learning rate of the cosine schedule")->capture_default_str();
  cmd->add_option("--adam-beta1", tc.adam_beta1, "Adam beta1")->capture_default_str();
  cmd->add_option("--adam-beta2", tc.adam_beta2, "Adam beta2")->capture_default_str();
  cmd->add_option("--adam-eps", tc.adam_eps, "Adam epsilon")->capture_default_str();
  cmd->add_option("--threshold-momentum", tc.threshold_momentum, "EMA momentum of the JumpReLU thresholds")
      ->capture_default_str();
}

void add_eval_flags(CLI::App* cmd, EvalOptions& e) {
  cmd->add_option("--split", e.split, "Evaluation split: train, val or test")->capture_default_str();
  cmd->add_option("--level", e.level, "Nesting level to evaluate (0 = final)")->capture_default_str();
  cmd->add_option("--recovery-n", e.recovery_n, "Feature counts for the recovery curve")->delimiter(',')
      ->capture_default_str();
  cmd->add_option("--probe-l2", e.probe.l2, "Probe L2 penalty")->capture_default_str();
  cmd->add_option("--probe-max-iters", e.probe.max_iters, "Probe iteration cap")->capture_default_str();
  cmd->add_option("--probe-tol", e.probe.tol, "Probe gradient-norm tolerance")->capture_default_str();
  cmd->add_option("--min-prevalence", e.min_prevalence, "Minimum organ prevalence for a probe task")
      ->capture_default_str();
  cmd->add_option("--null-pairs", e.null_pairs, "Random pairs for the null Jaccard")->capture_default_str();
  cmd->add_option("--score-seed", e.seed, "Seed of the null Jaccard sample")->capture_default_str();
}

struct ClientFlags {
  ClientConfig config;
  std::size_t timeout_ms = 60000;

  ClientConfig resolved() const {
    auto c = config;
    c.timeout = std::chrono::milliseconds(timeout_ms);
    return c;
  }
};

void add_client_flags(CLI::App* cmd, const std::string& prefix, ClientFlags& f) {
  cmd->add_option("--" + prefix + "-url", f.config.base_url, "Chat-completion base URL or mock:<kind>")
      ->capture_default_str();
  cmd->add_option("--" + prefix + "-model", f.config.model, "Model name sent with each request")->capture_default_str();
  cmd->add_option("--" + prefix + "-token-env", f.config.token_env, "Environment variable holding the bearer token")
      ->capture_default_str();
  cmd->add_option("--" + prefix + "-retries", f.config.retries, "Extra attempts after a transport failure")
      ->capture_default_str();
  cmd->add_option("--" + prefix + "-timeout-ms", f.timeout_ms, "Per-request timeout")->capture_default_str();
}

json client_json(const ClientFlags& f) {
  return {{"name", f.config.name}, {"url", f.config.base_url}, {"model", f.config.model}};
}

std::vector<ConfigResult> read_results(const fs::path& path) {
  std::vector<ConfigResult> out;
  for (const auto& line : read_lines(path)) out.push_back(config_result_from_line(line));
  return out;
}

// ---------------------------------------------------------------- commands

struct SynthArgs {
  SynthSpec spec;
  std::vector<std::string> holdout;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
};

void write_splits(const Workspace& ws, const EmbeddingDataset& ds, const std::vector<std::string>& holdout,
                  double train_fraction, std::uint64_t seed, Manifest& m, std::ostream& out) {
  const auto split = make_splits(ds, {holdout.begin(), holdout.end()}, train_fraction, seed);
  save_split(split, ws.at(files::splits));
  m.output(ws, files::splits);
  out << "splits: train " << split.train_ids.size() << ", val " << split.val_ids.size() << ", test "
      << split.test_ids.size() << "\n";
}

void cmd_synth(const Workspace& ws, const SynthArgs& a, std::ostream& out) {
  const auto result = synth_dataset(a.spec);
  save_dataset(result.dataset, ws.at(files::embeddings), ws.at(files::metadata));
  save_matrix(ws.at(files::atoms), result.atoms);
  Manifest m("synth");
  m.param("d", a.spec.d);
  m.param("atoms", a.spec.n_truth);
  m.param("n", a.spec.n_samples);
  m.param("s_active", a.spec.s_active);
  m.param("noise", a.spec.noise_sigma);
  m.param("orthogonal", a.spec.orthogonal_atoms);
  m.param("slices_per_scan", a.spec.slices_per_scan);
  m.param("holdout", a.holdout);
  m.param("train_fraction", a.train_fraction);
  m.seed("synth", a.spec.seed);
  m.seed("split", a.split_seed);
  m.output(ws, files::embeddings);
  m.output(ws, files::metadata);
  m.output(ws, files::atoms);
  out << "synthesized " << result.dataset.size() << " samples, d=" << result.dataset.d() << ", "
      << a.spec.n_truth << " atoms\n";
  write_splits(ws, result.dataset, a.holdout, a.train_fraction, a.split_seed, m, out);
  m.write(ws);
}

struct IngestArgs {
  std::string embeddings;
  std::string metadata;
  std::vector<std::string> holdout;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
};

void cmd_ingest(const Workspace& ws, const IngestArgs& a, std::ostream& out) {
  const auto ds = load_dataset(a.embeddings, a.metadata);
  Manifest m("ingest");
  m.external_input(a.embeddings);
  m.external_input(a.metadata);
  save_dataset(ds, ws.at(files::embeddings), ws.at(files::metadata));
  m.param("holdout", a.holdout);
  m.param("train_fraction", a.train_fraction);
  m.seed("split", a.split_seed);
  m.output(ws, files::embeddings);
  m.output(ws, files::metadata);
  out << "ingested " << ds.size() << " samples, d=" << ds.d() << ", " << ds.organ_vocabulary().size()
      << " organ labels\n";
  write_splits(ws, ds, a.holdout, a.train_fraction, a.split_seed, m, out);
  m.write(ws);
}

struct TrainArgs {
  std::vector<std::size_t> dict_sizes{8, 16};
  std::vector<std::size_t> k_values{1, 2};
  TrainConfig train = default_train_config();
  std::string checkpoint = files::checkpoint;
};

void cmd_train(const Workspace& ws, const TrainArgs& a, std::ostream& out) {
  const auto ds = ws.dataset();
  const auto split = ws.split();
  const SaeConfig sae{ds.d(), a.dict_sizes, a.k_values};
  const auto cp = train(ds, split, sae, a.train, [&](const EpochReport& r) {
    out << "epoch " << r.epoch << "/" << a.train.epochs << " train_loss " << fmt(r.train_loss, 6) << " val_loss "
        << fmt(r.val_loss, 6) << "\n";
  });
  save_checkpoint(cp, ws.at(a.checkpoint));
  Manifest m("train");
  m.input(ws, files::embeddings);
  m.input(ws, files::metadata);
  m.input(ws, files::splits);
  m.param("dict_sizes", a.dict_sizes);
  m.param("k_values", a.k_values);
  m.param("train", train_config_json(a.train));
  m.seed("train", a.train.seed);
  m.output(ws, a.checkpoint);
  m.write(ws);
  out << "saved " << a.checkpoint << " (" << config_id(cp) << "), final loss " << fmt(cp.final_loss, 6) << "\n";
}

struct SweepArgs {
  std::string spec;
  bool dry_run = false;
  std::size_t workers = 1;
  std::size_t input_dim = 0;
  TrainConfig train = default_train_config();
  EvalOptions eval;
};

void cmd_sweep(const Workspace& ws, const SweepArgs& a, std::ostream& out, std::ostream& err) {
  const auto spec = a.spec.empty() ? default_sweep_spec() : load_sweep_spec(a.spec);
  std::optional<EmbeddingDataset> ds;
  std::size_t d = a.input_dim;
  if (!a.dry_run || (d == 0 && fs::exists(ws.at(files::embeddings)))) {
    ds.emplace(ws.dataset());
    d = ds->d();
  }
  if (d == 0) d = 1;  // only validation runs in a dry run without data
  const auto entries = enumerate_sweep(spec, d);
  if (a.dry_run) {
    for (const auto& e : entries) out << e.id() << "\n";
    out << entries.size() << " configurations\n";
    return;
  }
  const auto split = ws.split();
  fs::create_directories(ws.at(files::sweep_dir));
  const auto runs = run_sweep(*ds, split, entries, a.train, a.workers, [&](const SweepRunResult& r) {
    out << "trained " << r.entry.id() << " final loss " << fmt(r.checkpoint.final_loss, 6) << "\n";
  });
  Manifest m("sweep");
  m.input(ws, files::embeddings);
  m.input(ws, files::metadata);
  m.input(ws, files::splits);
  if (!a.spec.empty()) m.external_input(a.spec);
  m.param("train", train_config_json(a.train));
  m.param("eval", eval_options_json(a.eval));
  m.param("configurations", entries.size());
  std::vector<std::string> lines;
  for (const auto& r : runs) {
    const auto name = std::string(files::sweep_dir) + "/" + r.entry.id() + ".saec";
    save_checkpoint(r.checkpoint, ws.at(name));
    m.output(ws, name);
    lines.push_back(config_result_line(evaluate_checkpoint(*ds, split, r.checkpoint, a.eval, &err)));
  }
  write_lines(ws.at(files::sweep_report), lines);
  m.output(ws, files::sweep_report);
  m.write(ws);
  out << "evaluated " << runs.size() << " configurations into " << files::sweep_report << "\n";
}

struct EvalArgs {
  std::string checkpoint = files::checkpoint;
  EvalOptions eval;
};

void cmd_eval(const Workspace& ws, const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const auto ds = ws.dataset();
  const auto split = ws.split();
  const auto cp = ws.checkpoint(a.checkpoint);
  const auto r = evaluate_checkpoint(ds, split, cp, a.eval, &err);
  write_lines(ws.at(files::report), {config_result_line(r)});
  Manifest m("eval");
  m.input(ws, files::embeddings);
  m.input(ws, files::metadata);
  m.input(ws, files::splits);
  m.input(ws, a.checkpoint);
  m.param("eval", eval_options_json(a.eval));
  m.seed("score", a.eval.seed);
  m.output(ws, files::report);
  m.write(ws);
  out << r.config_id << ": R2 " << fmt(r.r2) << ", L0 " << fmt(r.mean_l0, 2) << ", alive " << r.alive << ", M "
      << fmt(r.m_config) << ", AUC dense " << fmt(r.dense_auc) << " sparse " << fmt(r.sparse_auc) << "\n";
  for (const auto& [n, ratio] : r.recovery) out << "  recovery@" << n << " " << fmt(ratio) << "\n";
}

struct ScoreArgs {
  std::string checkpoint = files::checkpoint;
  std::string split = "val";
  std::size_t level = 0;
  std::size_t null_pairs = kDefaultNullPairs;
  std::uint64_t seed = 0;
};

FeatureActivationTable split_table(const EmbeddingDataset& ds, const SplitAssignment& split, const Checkpoint& cp,
                                   const std::string& split_name, std::size_t level) {
  const auto rows = split_rows(ds, split, split_name);
  const auto lvl = resolve_level(cp.sae, level);
  return FeatureActivationTable::build(encode_rows(ds, rows, cp, lvl), rows, cp.sae.prefix(lvl));
}

void cmd_score(const Workspace& ws, const ScoreArgs& a, std::ostream& out) {
  const auto ds = ws.dataset();
  const auto split = ws.split();
  const auto cp = ws.checkpoint(a.checkpoint);
  const auto table = split_table(ds, split, cp, a.split, a.level);
  const auto scores = score_features(table, ds, a.null_pairs, a.seed);
  std::vector<std::string> lines;
  for (const auto& s : scores) lines.push_back(feature_score_line(s));
  write_lines(ws.at(files::scores), lines);
  Manifest m("score");
  m.input(ws, files::embeddings);
  m.input(ws, files::metadata);
  m.input(ws, files::splits);
  m.input(ws, a.checkpoint);
  m.param("split", a.split);
  m.param("level", a.level);
  m.param("null_pairs", a.null_pairs);
  m.seed("score", a.seed);
  m.output(ws, files::scores);
  m.write(ws);
  const double mc = monosemanticity_config(scores);
  out << "scored " << scores.size() << " features, m_config " << fmt(mc) << "\n";
  const auto top = select_features_for_interp(scores, 10);
  for (auto f : top)
    out << "  feature " << f << " M " << fmt(scores[f].m) << " (C " << fmt(scores[f].coherence) << ", S "
        << fmt(scores[f].specificity) << ")\n";
}

struct RetrieveArgs {
  std::string checkpoint = files::checkpoint;
  std::string split = "val";
  std::size_t level = 0;
  std::vector<std::size_t> ks{1, 5, 10, 20};
  std::size_t n_refs = 1000;
  std::size_t top_m = 5;
  std::uint64_t seed = 0;
};

void cmd_retrieve(const Workspace& ws, const RetrieveArgs& a, std::ostream& out) {
  if (a.ks.empty()) throw UsageError("retrieve: --k needs at least one value");
  const auto ds = ws.dataset();
  const auto split = ws.split();
  const auto cp = ws.checkpoint(a.checkpoint);
  const auto rows = split_rows(ds, split, a.split);
  const auto codes = encode_rows(ds, rows, cp, resolve_level(cp.sae, a.level));
  const auto index = build_index(ds, rows, codes, *std::max_element(a.ks.begin(), a.ks.end()));
  save_index(index, ws.at(files::index));
  const auto n_refs = std::min(a.n_refs, index.size());
  const auto table = evaluate_fingerprint_retrieval(index, a.ks, n_refs, a.top_m, a.seed);
  json doc{{"dense", table.dense}, {"n_refs", table.n_refs}, {"top_m", table.top_m}, {"fingerprint", json::array()}};
  for (const auto& [k, q] : table.quality) doc["fingerprint"].push_back({{"k", k}, {"quality", q}});
  write_text(ws.at(files::retrieval), doc.dump(2) + "\n");
  Manifest m("retrieve");
  m.input(ws, files::embeddings);
  m.input(ws, files::metadata);
  m.input(ws, files::splits);
  m.input(ws, a.checkpoint);
  m.param("split", a.split);
  m.param("level", a.level);
  m.param("k", a.ks);
  m.param("n_refs", n_refs);
  m.param("top_m", a.top_m);
  m.seed("references", a.seed);
  m.output(ws, files::index);
  m.output(ws, files::retrieval);
  m.write(ws);
  for (const auto& [k, q] : table.quality)
    out << "k=" << k << " quality " << fmt(q) << " (" << fmt(100.0 * q / table.dense, 1) << "% of dense)\n";
  out << "dense quality " << fmt(table.dense) << " over " << n_refs << " references\n";
}

struct InterpretArgs {
  std::string checkpoint = files::checkpoint;
  std::string split = "val";
  std::size_t level = 0;
  ClientFlags generator{{"generator", "mock:concept"}};
  ClientFlags judge{{"judge", "mock:judge"}};
  InterpOptions options;
};

void cmd_interpret(const Workspace& ws, const InterpretArgs& a, std::ostream& out) {
  const auto ds = ws.dataset();
  const auto split = ws.split();
  const auto cp = ws.checkpoint(a.checkpoint);
  ws.require(files::scores, "score");
  std::vector<FeatureScore> scores;
  for (const auto& line : read_lines(ws.at(files::scores))) scores.push_back(feature_score_from_line(line));
  const auto table = split_table(ds, split, cp, a.split, a.level);
  auto generator = make_client(a.generator.resolved());
  auto judge = make_client(a.judge.resolved());
  const auto result = run_interp(*generator, *judge, scores, table, ds, a.options);

  std::vector<std::string> dossier_lines, concept_lines, trial_lines;
  for (const auto& d : result.dossiers)
    dossier_lines.push_back(json{{"feature", d.feature_index},
                                 {"top_ids", d.top_ids},
                                 {"exemplar_ids", d.exemplar_ids},
                                 {"modality", d.summary.modality},
                                 {"organs", d.summary.organs},
                                 {"age_group", d.summary.age_group},
                                 {"sex", d.summary.sex}}
                                .dump());
  for (const auto& c : result.concepts) concept_lines.push_back(concept_line(c));
  for (const auto& t : result.trials) trial_lines.push_back(trial_line(t));
  write_lines(ws.at(files::dossiers), dossier_lines);
  write_lines(ws.at(files::concepts), concept_lines);
  write_lines(ws.at(files::trials), trial_lines);
  write_text(ws.at(files::interp_summary), json::parse(summary_json(result.summary)).dump(2) + "\n");

  Manifest m("interpret");
  m.input(ws, files::embeddings);
  m.input(ws, files::metadata);
  m.input(ws, files::splits);
  m.input(ws, a.checkpoint);
  m.input(ws, files::scores);
  m.param("split", a.split);
  m.param("level", a.level);
  m.param("generator", client_json(a.generator));
  m.param("judge", client_json(a.judge));
  m.param("n_features", a.options.n_features);
  m.param("top_n", a.options.top_n);
  m.param("exemplars", a.options.exemplars);
  m.seed("trials", a.options.seed);
  for (const char* f : {files::dossiers, files::concepts, files::trials, files::interp_summary}) m.output(ws, f);
  m.write(ws);
  out << "interpreted " << result.concepts.size() << " features, judge mean rank "
      << fmt(result.summary.mean_rank, 3) << "\n";
}

struct QueryArgs {
  std::string text;
  std::string checkpoint = files::checkpoint;
  std::string split = "val";
  std::size_t level = 0;
  ClientFlags matcher{{"matcher", "mock:matcher"}};
  std::size_t max_matches = 5;
  std::size_t k = 5;
  std::size_t top_m = 10;
};

void cmd_query(const Workspace& ws, const QueryArgs& a, std::ostream& out) {
  const auto ds = ws.dataset();
  const auto split = ws.split();
  const auto cp = ws.checkpoint(a.checkpoint);
  ws.require(files::concepts, "interpret");
  std::vector<ConceptRecord> concepts;
  for (const auto& line : read_lines(ws.at(files::concepts))) concepts.push_back(concept_from_line(line));
  auto matcher = make_client(a.matcher.resolved());
  const auto features = match_concepts(*matcher, a.text, concepts, a.max_matches);

  Manifest m("query");
  m.input(ws, files::embeddings);
  m.input(ws, files::metadata);
  m.input(ws, files::splits);
  m.input(ws, a.checkpoint);
  m.input(ws, files::concepts);

  const auto table = split_table(ds, split, cp, a.split, a.level);
  json doc{{"query", a.text}, {"matched_features", features}, {"fingerprint", json::array()}, {"hits", json::array()}};
  if (!features.empty()) {
    const auto fp = mean_activation_fingerprint(features, table, a.k);
    for (const auto& e : fp.entries) doc["fingerprint"].push_back({{"feature", e.index}, {"value", e.value}});
    if (!fp.entries.empty()) {
      RetrievalIndex index;
      if (fs::exists(ws.at(files::index))) {
        index = load_index(ws.at(files::index));
        m.input(ws, files::index);
      } else {
        const auto rows = split_rows(ds, split, a.split);
        index = build_index(ds, rows, encode_rows(ds, rows, cp, resolve_level(cp.sae, a.level)), cp.sae.dict_size());
      }
      for (const auto& hit : retrieve(fp, index, a.top_m)) {
        const auto& rec = ds.record(ds.row_of(hit.sample_id));
        doc["hits"].push_back({{"sample_id", hit.sample_id},
                               {"similarity", hit.similarity},
                               {"organs", std::vector<std::string>(rec.organ_set.begin(), rec.organ_set.end())}});
      }
    }
  }
  write_text(ws.at(files::query_result), doc.dump(2) + "\n");
  m.param("query", a.text);
  m.param("matcher", client_json(a.matcher));
  m.param("max_matches", a.max_matches);
  m.param("k", a.k);
  m.param("top_m", a.top_m);
  m.param("split", a.split);
  m.output(ws, files::query_result);
  m.write(ws);

  out << "matched features:";
  for (auto f : features) out << " " << f;
  out << (features.empty() ? " none\n" : "\n");
  for (const auto& h : doc["hits"]) {
    out << "  " << h["sample_id"].get<std::string>() << " " << fmt(h["similarity"].get<double>()) << " [";
    bool first = true;
    for (const auto& o : h["organs"]) {
      out << (first ? "" : ", ") << o.get<std::string>();
      first = false;
    }
    out << "]\n";
  }
}

struct ReportArgs {
  std::size_t recovery_n = 10;
};

void cmd_report(const Workspace& ws, const ReportArgs& a, std::ostream& out, std::ostream& err) {
  Manifest m("report");
  ReportInputs in;
  in.recovery_n = a.recovery_n;
  for (const char* name : {files::sweep_report, files::report}) {
    if (!fs::exists(ws.at(name))) continue;
    m.input(ws, name);
    for (auto& r : read_results(ws.at(name))) {
      const bool dup = std::any_of(in.configs.begin(), in.configs.end(),
                                   [&](const ConfigResult& c) { return c.config_id == r.config_id; });
      if (!dup) in.configs.push_back(std::move(r));
    }
  }
  if (!in.configs.empty()) {
    const bool rankable = std::all_of(in.configs.begin(), in.configs.end(),
                                      [&](const ConfigResult& c) { return c.recovery.contains(a.recovery_n); });
    if (rankable) {
      in.ranking = rank_configs(in.configs, a.recovery_n);
    } else {
      err << "note: not ranking; some configurations lack recovery at N=" << a.recovery_n << "\n";
    }
  }
  if (fs::exists(ws.at(files::retrieval))) {
    in.retrieval = json::parse(read_text(ws.at(files::retrieval)));
    m.input(ws, files::retrieval);
  }
  if (fs::exists(ws.at(files::interp_summary))) {
    in.interp = json::parse(read_text(ws.at(files::interp_summary)));
    m.input(ws, files::interp_summary);
  }
  const auto text = render_report(in);
  write_text(ws.at(files::report_text), text);
  m.output(ws, files::report_text);

  const std::vector<std::tuple<std::string, std::string, std::function<double(const ConfigResult&)>>> charts{
      {"fig_r2_vs_l0.svg", "R2", [](const ConfigResult& c) { return c.r2; }},
      {"fig_auc_vs_l0.svg", "sparse probe AUC", [](const ConfigResult& c) { return c.sparse_auc; }},
      {"fig_alive_vs_l0.svg", "alive features", [](const ConfigResult& c) { return static_cast<double>(c.alive); }},
      {"fig_m_vs_l0.svg", "m_config", [](const ConfigResult& c) { return c.m_config; }},
  };
  if (!in.configs.empty()) {
    for (const auto& [name, label, value] : charts) {
      std::vector<ScatterPoint> pts;
      for (const auto& c : in.configs) pts.push_back({c.mean_l0, value(c)});
      write_text(ws.at(name), scatter_svg(label + " vs mean L0", "mean L0", label, pts));
      m.output(ws, name);
    }
  }
  m.param("recovery_n", a.recovery_n);
  m.write(ws);
  out << text;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Matryoshka sparse autoencoder toolkit for frozen embedding vectors", "sail"};
  app.set_version_flag("--version", SAIL_VERSION_STRING);
  app.set_config("--config", "", "TOML config file; [command] sections hold per-command flags, flags override it");
  app.require_subcommand(1);
  std::string workdir = ".";
  app.add_option("-w,--workdir", workdir, "Directory holding all artifacts")->capture_default_str();

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a planted-dictionary dataset and its splits");
  c_synth->add_option("--d", synth.spec.d, "Embedding dimension")->capture_default_str();
  c_synth->add_option("--atoms", synth.spec.n_truth, "Planted atom count")->capture_default_str();
  c_synth->add_option("--n", synth.spec.n_samples, "Sample count")->capture_default_str();
  c_synth->add_option("--s-active", synth.spec.s_active, "Atoms per sample")->capture_default_str();
  c_synth->add_option("--noise", synth.spec.noise_sigma, "Gaussian noise sigma")->capture_default_str();
  c_synth->add_option("--seed", synth.spec.seed, "Generator seed")->capture_default_str();
  c_synth->add_flag("--orthogonal", synth.spec.orthogonal_atoms, "Orthonormalize the atoms");
  c_synth->add_option("--slices-per-scan", synth.spec.slices_per_scan, "Samples sharing one scan id")
      ->capture_default_str();
  c_synth->add_option("--holdout", synth.holdout, "Institutions reserved for test")->delimiter(',');
  c_synth->add_option("--train-fraction", synth.train_fraction, "Train share of non-holdout scans")
      ->capture_default_str();
  c_synth->add_option("--split-seed", synth.split_seed, "Split shuffle seed")->capture_default_str();

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Validate external SAIL-EMB + JSON-lines data and split it");
  c_ingest->add_option("--embeddings", ingest.embeddings, "SAIL-EMB file")->required()->check(CLI::ExistingFile);
  c_ingest->add_option("--metadata", ingest.metadata, "JSON-lines metadata")->required()->check(CLI::ExistingFile);
  c_ingest->add_option("--holdout", ingest.holdout, "Institutions reserved for test")->delimiter(',');
  c_ingest->add_option("--train-fraction", ingest.train_fraction, "Train share of non-holdout scans")
      ->capture_default_str();
  c_ingest->add_option("--split-seed", ingest.split_seed, "Split shuffle seed")->capture_default_str();

  TrainArgs train_args;
  auto* c_train = app.add_subcommand("train", "Train one Matryoshka SAE on the train split");
  c_train->add_option("--dict-sizes", train_args.dict_sizes, "Nested dictionary sizes")->delimiter(',')
      ->capture_default_str();
  c_train->add_option("--k", train_args.k_values, "Active features per sample at each level")->delimiter(',')
      ->capture_default_str();
  c_train->add_option("--seed", train_args.train.seed, "Initialization and batching seed")->capture_default_str();
  c_train->add_option("--checkpoint", train_args.checkpoint, "Output checkpoint name")->capture_default_str();
  add_train_flags(c_train, train_args.train);

  SweepArgs sweep;
  auto* c_sweep = app.add_subcommand("sweep", "Enumerate, train and evaluate a configuration sweep");
  c_sweep->add_option("--spec", sweep.spec, "Sweep spec (.toml or JSON); default is the built-in 96-config spec")
      ->check(CLI::ExistingFile);
  c_sweep->add_flag("--dry-run", sweep.dry_run, "Only print the configurations");
  c_sweep->add_option("--workers", sweep.workers, "Concurrent training runs")->capture_default_str();
  c_sweep->add_option("--input-dim", sweep.input_dim, "Embedding dimension for a dry run without data");
  add_train_flags(c_sweep, sweep.train);
  add_eval_flags(c_sweep, sweep.eval);

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Reconstruction, sparsity, monosemanticity and probe metrics");
  c_eval->add_option("--checkpoint", eval.checkpoint, "Checkpoint name in the workdir")->capture_default_str();
  add_eval_flags(c_eval, eval.eval);

  ScoreArgs score;
  auto* c_score = app.add_subcommand("score", "Per-feature coherence, specificity and M");
  c_score->add_option("--checkpoint", score.checkpoint, "Checkpoint name in the workdir")->capture_default_str();
  c_score->add_option("--split", score.split, "Split to score on")->capture_default_str();
  c_score->add_option("--level", score.level, "Nesting level (0 = final)")->capture_default_str();
  c_score->add_option("--null-pairs", score.null_pairs, "Random pairs for the null Jaccard")->capture_default_str();
  c_score->add_option("--seed", score.seed, "Seed of the null Jaccard sample")->capture_default_str();

  RetrieveArgs retrieve_args;
  auto* c_retrieve = app.add_subcommand("retrieve", "Build the fingerprint index and measure retrieval quality");
  c_retrieve->add_option("--checkpoint", retrieve_args.checkpoint, "Checkpoint name in the workdir")
      ->capture_default_str();
  c_retrieve->add_option("--split", retrieve_args.split, "Split to index")->capture_default_str();
  c_retrieve->add_option("--level", retrieve_args.level, "Nesting level (0 = final)")->capture_default_str();
  c_retrieve->add_option("--k", retrieve_args.ks, "Fingerprint sizes to evaluate")->delimiter(',')
      ->capture_default_str();
  c_retrieve->add_option("--n-refs", retrieve_args.n_refs, "Reference samples (capped at the index size)")
      ->capture_default_str();
  c_retrieve->add_option("--top-m", retrieve_args.top_m, "Neighbors retrieved per reference")->capture_default_str();
  c_retrieve->add_option("--seed", retrieve_args.seed, "Reference sampling seed")->capture_default_str();

  InterpretArgs interpret;
  auto* c_interpret = app.add_subcommand("interpret", "Generate concept descriptions and run the judge protocol");
  c_interpret->add_option("--checkpoint", interpret.checkpoint, "Checkpoint name in the workdir")->capture_default_str();
  c_interpret->add_option("--split", interpret.split, "Split providing exemplars")->capture_default_str();
  c_interpret->add_option("--level", interpret.level, "Nesting level (0 = final)")->capture_default_str();
  c_interpret->add_option("--n-features", interpret.options.n_features, "Most monosemantic features to interpret")
      ->capture_default_str();
  c_interpret->add_option("--top-n", interpret.options.top_n, "Top activating samples per dossier")
      ->capture_default_str();
  c_interpret->add_option("--exemplars", interpret.options.exemplars, "Greedy-dissimilar exemplars per feature")
      ->capture_default_str();
  c_interpret->add_option("--seed", interpret.options.seed, "Judge trial seed")->capture_default_str();
  c_interpret->add_option("--max-in-flight", interpret.options.max_in_flight, "Concurrent chat requests")
      ->capture_default_str();
  add_client_flags(c_interpret, "generator", interpret.generator);
  add_client_flags(c_interpret, "judge", interpret.judge);

  QueryArgs query;
  auto* c_query = app.add_subcommand("query", "Retrieve samples for a text query through matched concepts");
  c_query->add_option("text", query.text, "Clinical text query")->required();
  c_query->add_option("--checkpoint", query.checkpoint, "Checkpoint name in the workdir")->capture_default_str();
  c_query->add_option("--split", query.split, "Split to search")->capture_default_str();
  c_query->add_option("--level", query.level, "Nesting level (0 = final)")->capture_default_str();
  c_query->add_option("--max-matches", query.max_matches, "Concepts kept from the matcher")->capture_default_str();
  c_query->add_option("--k", query.k, "Query fingerprint size")->capture_default_str();
  c_query->add_option("--top-m", query.top_m, "Samples returned")->capture_default_str();
  add_client_flags(c_query, "matcher", query.matcher);

  ReportArgs report;
  auto* c_report = app.add_subcommand("report", "Render tables and SVG charts from the stored results");
  c_report->add_option("--recovery-n", report.recovery_n, "N used for the performance rank")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::usage);
  }

  try {
    const Workspace ws{workdir};
    if (!fs::is_directory(ws.dir)) {
      if (!c_synth->parsed() && !c_ingest->parsed() && !c_sweep->parsed())
        throw UsageError("workdir " + workdir + " does not exist");
      fs::create_directories(ws.dir);
    }
    if (c_synth->parsed()) cmd_synth(ws, synth, out);
    if (c_ingest->parsed()) cmd_ingest(ws, ingest, out);
    if (c_train->parsed()) cmd_train(ws, train_args, out);
    if (c_sweep->parsed()) cmd_sweep(ws, sweep, out, err);
    if (c_eval->parsed()) cmd_eval(ws, eval, out, err);
    if (c_score->parsed()) cmd_score(ws, score, out);
    if (c_retrieve->parsed()) cmd_retrieve(ws, retrieve_args, out);
    if (c_interpret->parsed()) cmd_interpret(ws, interpret, out);
    if (c_query->parsed()) cmd_query(ws, query, out);
    if (c_report->parsed()) cmd_report(ws, report, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::data);
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"sail"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace sail::app
