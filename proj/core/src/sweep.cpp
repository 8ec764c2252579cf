#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "sail/errors.hpp"
#include "sail/trainer.hpp"
#include "toml++/toml.hpp"

namespace sail {
namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += '-';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<std::vector<std::size_t>> toml_nested(const toml::table& tbl, const char* key) {
  const auto* arr = tbl[key].as_array();
  if (!arr) throw UsageError(std::string("sweep spec: missing array \"") + key + "\"");
  std::vector<std::vector<std::size_t>> out;
  for (const auto& inner : *arr) {
    const auto* list = inner.as_array();
    if (!list) throw UsageError(std::string("sweep spec: \"") + key + "\" must be an array of integer arrays");
    auto& row = out.emplace_back();
    for (const auto& v : *list) {
      const auto n = v.value<std::int64_t>();
      if (!n || *n <= 0) throw UsageError(std::string("sweep spec: \"") + key + "\" entries must be positive integers");
      row.push_back(static_cast<std::size_t>(*n));
    }
  }
  return out;
}

}  // namespace

SweepSpec default_sweep_spec() {
  SweepSpec s;
  s.dict_families = {{16, 64, 256, 1024}, {32, 128, 512, 2048}, {64, 256, 1024, 4096}, {128, 512, 2048, 8192}};
  s.sparsity_patterns = {
      {10, 10, 10, 10}, {20, 20, 20, 20}, {40, 40, 40, 40}, {80, 80, 80, 80},    // fixed
      {5, 10, 20, 40},  {10, 20, 40, 80}, {20, 40, 80, 160}, {30, 60, 120, 240},  // progressive
  };
  s.replicate_seeds = {0, 1, 2};
  s.clamp_k = true;
  return s;
}

SweepSpec load_sweep_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open sweep spec " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  SweepSpec spec;
  if (path.extension() == ".toml") {
    toml::table tbl;
    try {
      tbl = toml::parse(ss.str(), path.string());
    } catch (const toml::parse_error& e) {
      throw UsageError(std::string("sweep spec: ") + std::string(e.description()));
    }
    spec.dict_families = toml_nested(tbl, "dict_families");
    spec.sparsity_patterns = toml_nested(tbl, "sparsity_patterns");
    const auto* seeds = tbl["replicate_seeds"].as_array();
    if (!seeds) throw UsageError("sweep spec: missing array \"replicate_seeds\"");
    for (const auto& v : *seeds) {
      const auto n = v.value<std::int64_t>();
      if (!n || *n < 0) throw UsageError("sweep spec: replicate_seeds must be non-negative integers");
      spec.replicate_seeds.push_back(static_cast<std::uint64_t>(*n));
    }
    spec.clamp_k = tbl["clamp_k"].value_or(false);
  } else {
    try {
      const auto j = nlohmann::json::parse(ss.str());
      spec.dict_families = j.at("dict_families").get<std::vector<std::vector<std::size_t>>>();
      spec.sparsity_patterns = j.at("sparsity_patterns").get<std::vector<std::vector<std::size_t>>>();
      spec.replicate_seeds = j.at("replicate_seeds").get<std::vector<std::uint64_t>>();
      spec.clamp_k = j.value("clamp_k", false);
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(std::string("sweep spec: ") + e.what());
    }
  }
  return spec;
}

std::string SweepEntry::id() const {
  return "D" + join(config.dict_sizes) + "_K" + join(config.k_values) + "_s" + std::to_string(seed);
}

std::vector<SweepEntry> enumerate_sweep(const SweepSpec& spec, std::size_t input_dim) {
  if (spec.dict_families.empty() || spec.sparsity_patterns.empty() || spec.replicate_seeds.empty())
    throw UsageError("sweep spec: dict_families, sparsity_patterns and replicate_seeds must be nonempty");
  std::vector<SweepEntry> entries;
  entries.reserve(spec.dict_families.size() * spec.sparsity_patterns.size() * spec.replicate_seeds.size());
  for (const auto& family : spec.dict_families) {
    for (const auto& pattern : spec.sparsity_patterns) {
      SaeConfig config{input_dim, family, pattern};
      if (spec.clamp_k && pattern.size() == family.size())
        for (std::size_t l = 0; l < family.size(); ++l) config.k_values[l] = std::min(pattern[l], family[l]);
      config.validate();
      for (auto seed : spec.replicate_seeds) entries.push_back({config, seed});
    }
  }
  return entries;
}

std::vector<SweepRunResult> run_sweep(const EmbeddingDataset& dataset, const SplitAssignment& split,
                                      const std::vector<SweepEntry>& entries, const TrainConfig& base,
                                      std::size_t workers, const std::function<void(const SweepRunResult&)>& on_done) {
  std::vector<SweepRunResult> results(entries.size());
  std::vector<std::exception_ptr> errors(entries.size());
  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;

  auto work = [&] {
    for (std::size_t i = next++; i < entries.size(); i = next++) {
      try {
        auto cfg = base;
        cfg.seed = entries[i].seed;
        results[i] = {entries[i], train(dataset, split, entries[i].config, cfg)};
        if (on_done) {
          std::lock_guard lock(callback_mutex);
          on_done(results[i]);
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  const std::size_t width = std::max<std::size_t>(1, std::min(workers, entries.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < width; ++w) pool.emplace_back(work);
    work();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

}  // namespace sail
