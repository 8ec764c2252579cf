#include "sail/embedding_store.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "sail/binary_io.hpp"
#include "sail/errors.hpp"
#include "sail/random.hpp"

namespace sail {
namespace {

using nlohmann::json;

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

const char* const kRequiredKeys[] = {"sample_id", "scan_id", "institution", "modality", "age_group", "sex", "organs"};

std::string required_string(const json& obj, const char* key, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_string())
    throw DataError("metadata line " + std::to_string(line + 1) + ": missing string key \"" + key + "\"");
  return it->get<std::string>();
}

EmbeddingRecord parse_metadata_line(const std::string& text, std::size_t line) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError("metadata line " + std::to_string(line + 1) + ": invalid JSON (" + e.what() + ")");
  }
  if (!obj.is_object()) throw DataError("metadata line " + std::to_string(line + 1) + ": not a JSON object");

  EmbeddingRecord r;
  r.sample_id = required_string(obj, "sample_id", line);
  r.scan_id = required_string(obj, "scan_id", line);
  r.institution = required_string(obj, "institution", line);
  r.modality = parse_modality(required_string(obj, "modality", line));
  r.age_group = required_string(obj, "age_group", line);
  r.sex = parse_sex(required_string(obj, "sex", line));
  const auto organs = obj.find("organs");
  if (organs == obj.end() || !organs->is_array())
    throw DataError("metadata line " + std::to_string(line + 1) + ": missing array key \"organs\"");
  for (const auto& o : *organs) {
    if (!o.is_string()) throw DataError("metadata line " + std::to_string(line + 1) + ": organ labels must be strings");
    r.organ_set.insert(o.get<std::string>());
  }
  for (const char* key : kRequiredKeys) obj.erase(key);
  if (!obj.empty()) r.extra_json = obj.dump();
  return r;
}

}  // namespace

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::ct: return "CT";
    case Modality::mr: return "MR";
    case Modality::other: return "OTHER";
  }
  return "OTHER";
}

std::string_view to_string(Sex s) {
  switch (s) {
    case Sex::male: return "M";
    case Sex::female: return "F";
    case Sex::unknown: return "U";
  }
  return "U";
}

Modality parse_modality(std::string_view text) {
  const auto u = upper(text);
  if (u == "CT") return Modality::ct;
  if (u == "MR" || u == "MRI") return Modality::mr;
  if (u == "OTHER" || u.empty()) return Modality::other;
  throw DataError("unknown modality \"" + std::string(text) + "\" (expected CT, MR or OTHER)");
}

Sex parse_sex(std::string_view text) {
  const auto u = upper(text);
  if (u == "M") return Sex::male;
  if (u == "F") return Sex::female;
  if (u == "U" || u.empty()) return Sex::unknown;
  throw DataError("unknown sex \"" + std::string(text) + "\" (expected M, F or U)");
}

EmbeddingDataset::EmbeddingDataset(std::size_t d, std::vector<EmbeddingRecord> records)
    : d_(d), records_(std::move(records)) {
  if (d_ == 0) throw DataError("embedding dimension must be >= 1");
  if (records_.empty()) throw DataError("dataset must contain at least one record");
  std::set<std::string> organs;
  index_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.embedding.size() != d_)
      throw DataError("record " + r.sample_id + ": embedding length " + std::to_string(r.embedding.size()) +
                      " != d=" + std::to_string(d_));
    for (float v : r.embedding)
      if (!std::isfinite(v)) throw DataError("record " + r.sample_id + ": non-finite embedding value");
    if (!index_.emplace(r.sample_id, i).second) throw DataError("duplicate sample_id \"" + r.sample_id + "\"");
    organs.insert(r.organ_set.begin(), r.organ_set.end());
  }
  organ_vocabulary_.assign(organs.begin(), organs.end());
}

std::optional<std::size_t> EmbeddingDataset::find(std::string_view sample_id) const {
  const auto it = index_.find(std::string(sample_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t EmbeddingDataset::row_of(std::string_view sample_id) const {
  const auto row = find(sample_id);
  if (!row) throw DataError("unknown sample_id \"" + std::string(sample_id) + "\"");
  return *row;
}

std::vector<std::size_t> EmbeddingDataset::rows_of(const std::set<std::string>& ids) const {
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (const auto& id : ids) rows.push_back(row_of(id));
  std::sort(rows.begin(), rows.end());
  return rows;
}

std::set<std::string> EmbeddingDataset::all_ids() const {
  std::set<std::string> ids;
  for (const auto& r : records_) ids.insert(r.sample_id);
  return ids;
}

std::set<std::string> EmbeddingDataset::institutions() const {
  std::set<std::string> out;
  for (const auto& r : records_) out.insert(r.institution);
  return out;
}

Matrix EmbeddingDataset::gather(std::span<const std::size_t> rows) const {
  Matrix x(rows.size(), d_);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& e = records_.at(rows[i]).embedding;
    auto dst = x.row(i);
    for (std::size_t j = 0; j < d_; ++j) dst[j] = e[j];
  }
  return x;
}

std::vector<double> EmbeddingDataset::embedding(std::size_t row) const {
  const auto& e = records_.at(row).embedding;
  return {e.begin(), e.end()};
}

std::string metadata_line(const EmbeddingRecord& r) {
  json obj = r.extra_json.empty() ? json::object() : json::parse(r.extra_json);
  obj["sample_id"] = r.sample_id;
  obj["scan_id"] = r.scan_id;
  obj["institution"] = r.institution;
  obj["modality"] = std::string(to_string(r.modality));
  obj["age_group"] = r.age_group;
  obj["sex"] = std::string(to_string(r.sex));
  obj["organs"] = std::vector<std::string>(r.organ_set.begin(), r.organ_set.end());
  return obj.dump();
}

EmbeddingDataset load_dataset(const std::filesystem::path& embeddings_path, const std::filesystem::path& metadata_path) {
  std::ifstream bin(embeddings_path, std::ios::binary);
  if (!bin) throw DataError("cannot open embeddings file " + embeddings_path.string());
  auto block = read_emb_block(bin);

  std::ifstream meta(metadata_path);
  if (!meta) throw DataError("cannot open metadata file " + metadata_path.string());
  std::vector<EmbeddingRecord> records;
  std::string line;
  while (std::getline(meta, line)) {
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    records.push_back(parse_metadata_line(line, records.size()));
  }
  if (records.size() != block.n)
    throw DataError("row-count mismatch: embeddings header says n=" + std::to_string(block.n) + " but metadata has " +
                    std::to_string(records.size()) + " lines");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto* begin = block.values.data() + i * block.d;
    records[i].embedding.assign(begin, begin + block.d);
  }
  return EmbeddingDataset(block.d, std::move(records));
}

void save_dataset(const EmbeddingDataset& dataset, const std::filesystem::path& embeddings_path,
                  const std::filesystem::path& metadata_path) {
  std::vector<float> values;
  values.reserve(dataset.size() * dataset.d());
  for (const auto& r : dataset.records()) values.insert(values.end(), r.embedding.begin(), r.embedding.end());
  {
    std::ofstream bin(embeddings_path, std::ios::binary | std::ios::trunc);
    if (!bin) throw DataError("cannot write " + embeddings_path.string());
    write_emb_block(bin, static_cast<std::uint32_t>(dataset.d()), dataset.size(), values);
  }
  std::ofstream meta(metadata_path, std::ios::trunc);
  if (!meta) throw DataError("cannot write " + metadata_path.string());
  for (const auto& r : dataset.records()) meta << metadata_line(r) << '\n';
}

SplitAssignment make_splits(const EmbeddingDataset& dataset, const std::set<std::string>& holdout_institutions,
                            double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw UsageError("train_fraction must lie in (0, 1)");
  const auto known = dataset.institutions();
  for (const auto& inst : holdout_institutions)
    if (!known.contains(inst)) throw DataError("unknown holdout institution \"" + inst + "\"");

  SplitAssignment split;
  split.holdout_institutions = holdout_institutions;
  split.seed = seed;

  struct Scan {
    std::vector<const EmbeddingRecord*> records;
    bool holdout = false;
  };
  std::map<std::string, Scan> scans;
  for (const auto& r : dataset.records()) {
    auto& scan = scans[r.scan_id];
    const bool held = holdout_institutions.contains(r.institution);
    if (!scan.records.empty() && scan.holdout != held)
      throw DataError("scan \"" + r.scan_id + "\" spans holdout and non-holdout institutions");
    scan.holdout = held;
    scan.records.push_back(&r);
  }

  using StratumKey = std::tuple<Modality, std::string, Sex>;
  std::map<StratumKey, std::vector<std::string>> strata;
  for (const auto& [scan_id, scan] : scans) {
    if (scan.holdout) {
      for (const auto* r : scan.records) split.test_ids.insert(r->sample_id);
      continue;
    }
    const auto* first = scan.records.front();
    strata[{first->modality, first->age_group, first->sex}].push_back(scan_id);
  }

  auto rng = make_rng(seed, 0x5eed5);
  for (auto& [key, scan_ids] : strata) {
    std::shuffle(scan_ids.begin(), scan_ids.end(), rng);
    const auto n = scan_ids.size();
    std::size_t n_train = n;
    if (n >= 2) {
      const auto rounded = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
      n_train = std::clamp<std::size_t>(rounded, 1, n - 1);
    }
    for (std::size_t i = 0; i < n; ++i) {
      auto& target = i < n_train ? split.train_ids : split.val_ids;
      for (const auto* r : scans.at(scan_ids[i]).records) target.insert(r->sample_id);
    }
  }
  if (split.train_ids.empty()) throw DataError("split produced an empty train set");
  if (split.val_ids.empty()) throw DataError("split produced an empty validation set");
  return split;
}

std::string split_to_json(const SplitAssignment& split) {
  json obj;
  obj["train_ids"] = split.train_ids;
  obj["val_ids"] = split.val_ids;
  obj["test_ids"] = split.test_ids;
  obj["holdout_institutions"] = split.holdout_institutions;
  obj["seed"] = split.seed;
  return obj.dump(1);
}

SplitAssignment split_from_json(std::string_view text) {
  try {
    const auto obj = json::parse(text);
    SplitAssignment s;
    s.train_ids = obj.at("train_ids").get<std::set<std::string>>();
    s.val_ids = obj.at("val_ids").get<std::set<std::string>>();
    s.test_ids = obj.at("test_ids").get<std::set<std::string>>();
    s.holdout_institutions = obj.at("holdout_institutions").get<std::set<std::string>>();
    s.seed = obj.at("seed").get<std::uint64_t>();
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid split file: ") + e.what());
  }
}

void save_split(const SplitAssignment& split, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << split_to_json(split) << '\n';
}

SplitAssignment load_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return split_from_json(ss.str());
}

BatchSampler::BatchSampler(const EmbeddingDataset& dataset, std::vector<std::size_t> rows, std::size_t batch_size,
                           std::uint64_t seed, std::uint64_t epoch)
    : dataset_(&dataset), order_(std::move(rows)), batch_size_(batch_size) {
  if (batch_size_ == 0) throw UsageError("batch_size must be >= 1");
  if (order_.empty()) throw DataError("cannot batch an empty id set");
  std::sort(order_.begin(), order_.end());
  auto rng = make_rng(seed, epoch + 1);
  std::shuffle(order_.begin(), order_.end(), rng);
}

std::size_t BatchSampler::batch_count() const noexcept { return (order_.size() + batch_size_ - 1) / batch_size_; }

std::optional<Batch> BatchSampler::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const auto end = std::min(order_.size(), cursor_ + batch_size_);
  Batch b;
  b.rows.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_), order_.begin() + static_cast<std::ptrdiff_t>(end));
  b.x = dataset_->gather(b.rows);
  cursor_ = end;
  return b;
}

std::vector<Batch> iterate_batches(const EmbeddingDataset& dataset, const std::set<std::string>& ids,
                                   std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch) {
  BatchSampler sampler(dataset, dataset.rows_of(ids), batch_size, seed, epoch);
  std::vector<Batch> out;
  out.reserve(sampler.batch_count());
  while (auto b = sampler.next()) out.push_back(std::move(*b));
  return out;
}

std::vector<double> dataset_mean(const EmbeddingDataset& dataset, std::span<const std::size_t> rows) {
  if (rows.empty()) throw DataError("dataset_mean: empty id set");
  std::vector<double> mean(dataset.d(), 0.0);
  for (auto row : rows) {
    const auto& e = dataset.record(row).embedding;
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += e[j];
  }
  for (auto& m : mean) m /= static_cast<double>(rows.size());
  return mean;
}

std::vector<double> dataset_mean(const EmbeddingDataset& dataset, const std::set<std::string>& ids) {
  const auto rows = dataset.rows_of(ids);
  return dataset_mean(dataset, rows);
}

std::string atom_label(std::size_t atom) { return "atom_" + std::to_string(atom); }

SynthResult synth_dataset(const SynthSpec& spec) {
  if (spec.d < 2) throw UsageError("synth: d must be >= 2");
  if (spec.n_truth < 1 || spec.n_samples < 1 || spec.s_active < 1) throw UsageError("synth: counts must be >= 1");
  if (spec.s_active > spec.n_truth) throw UsageError("synth: s_active must not exceed the atom count");
  if (!(spec.noise_sigma >= 0.0)) throw UsageError("synth: noise_sigma must be >= 0");
  if (spec.orthogonal_atoms && spec.n_truth > spec.d) throw UsageError("synth: orthogonal atoms need n_truth <= d");
  if (spec.slices_per_scan < 1) throw UsageError("synth: slices_per_scan must be >= 1");

  auto rng = make_rng(spec.seed, 0xa70);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> coef(0.5, 1.5);

  Matrix atoms(spec.n_truth, spec.d);
  for (std::size_t a = 0; a < spec.n_truth; ++a) {
    auto row = atoms.row(a);
    for (;;) {
      for (auto& v : row) v = gauss(rng);
      if (spec.orthogonal_atoms) {
        for (std::size_t b = 0; b < a; ++b) {
          const double p = dot(row, atoms.row(b));
          for (std::size_t j = 0; j < spec.d; ++j) row[j] -= p * atoms(b, j);
        }
      }
      const double norm = std::sqrt(squared_norm(row));
      if (norm > 1e-6) {
        for (auto& v : row) v /= norm;
        break;
      }
    }
  }

  static const char* const kInstitutions[] = {"inst_a", "inst_b", "inst_c"};
  static const char* const kAgeGroups[] = {"18-39", "40-59", "60+"};
  static const Modality kModalities[] = {Modality::ct, Modality::mr};
  static const Sex kSexes[] = {Sex::female, Sex::male};

  const auto width = std::to_string(spec.n_samples).size();
  auto padded = [width](std::size_t i) {
    auto s = std::to_string(i);
    return std::string(width > s.size() ? width - s.size() : 0, '0') + s;
  };

  std::vector<std::size_t> atom_ids(spec.n_truth);
  std::vector<double> x(spec.d);
  std::vector<EmbeddingRecord> records;
  records.reserve(spec.n_samples);
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    const std::size_t scan = i / spec.slices_per_scan;
    EmbeddingRecord r;
    r.sample_id = "s" + padded(i);
    r.scan_id = "scan" + padded(scan);
    r.institution = kInstitutions[scan % 3];
    r.modality = kModalities[scan % 2];
    r.sex = kSexes[(scan / 2) % 2];
    r.age_group = kAgeGroups[(scan / 4) % 3];

    std::iota(atom_ids.begin(), atom_ids.end(), std::size_t{0});
    // Partial Fisher-Yates: the first s_active entries become the active set.
    for (std::size_t s = 0; s < spec.s_active; ++s) {
      std::uniform_int_distribution<std::size_t> pick(s, spec.n_truth - 1);
      std::swap(atom_ids[s], atom_ids[pick(rng)]);
    }
    std::fill(x.begin(), x.end(), 0.0);
    for (std::size_t s = 0; s < spec.s_active; ++s) {
      const double c = coef(rng);
      const auto atom = atoms.row(atom_ids[s]);
      for (std::size_t j = 0; j < spec.d; ++j) x[j] += c * atom[j];
      r.organ_set.insert(atom_label(atom_ids[s]));
    }
    if (spec.noise_sigma > 0.0)
      for (auto& v : x) v += spec.noise_sigma * gauss(rng);
    r.embedding.assign(x.begin(), x.end());
    records.push_back(std::move(r));
  }
  return {EmbeddingDataset(spec.d, std::move(records)), std::move(atoms)};
}

}  // namespace sail
