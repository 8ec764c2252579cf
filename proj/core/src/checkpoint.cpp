#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "sail/binary_io.hpp"
#include "sail/errors.hpp"
#include "sail/trainer.hpp"

namespace sail {
namespace {

using nlohmann::json;

constexpr std::string_view kCheckpointMagic = "SAEC";

std::string tensor_bytes(std::uint64_t rows, std::uint64_t cols, std::span<const double> values) {
  std::ostringstream out(std::ios::binary);
  write_tensor_block(out, rows, cols, values);
  return std::move(out).str();
}

TensorBlock parse_tensor(const std::string& payload, std::string_view tag) {
  std::istringstream in(payload, std::ios::binary);
  try {
    return read_tensor_block(in);
  } catch (const CorruptFileError&) {
    throw CorruptFileError("checkpoint: section " + std::string(tag) + " is truncated");
  }
}

std::vector<double> as_vector(const TensorBlock& t) { return t.values; }

Matrix as_matrix(const TensorBlock& t) {
  Matrix m(t.rows, t.cols);
  std::copy(t.values.begin(), t.values.end(), m.values().begin());
  return m;
}

json config_json(const Checkpoint& cp) {
  json j;
  j["sae"] = {{"input_dim", cp.sae.input_dim}, {"dict_sizes", cp.sae.dict_sizes}, {"k_values", cp.sae.k_values}};
  const auto& t = cp.train;
  j["train"] = {{"lr0", t.lr0},
                {"lr_min", t.lr_min},
                {"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"adam_beta1", t.adam_beta1},
                {"adam_beta2", t.adam_beta2},
                {"adam_eps", t.adam_eps},
                {"seed", t.seed},
                {"threshold_momentum", t.threshold_momentum}};
  j["epochs_completed"] = cp.epochs_completed;
  j["threshold_steps"] = cp.params.threshold_steps;
  return j;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& cp) {
  std::vector<std::pair<std::string, std::string>> sections;
  sections.emplace_back("CONF", config_json(cp).dump());
  const auto& p = cp.params;
  sections.emplace_back("W___", tensor_bytes(p.weights.rows(), p.weights.cols(), p.weights.values()));
  sections.emplace_back("BPRE", tensor_bytes(1, p.pre_bias.size(), p.pre_bias));
  sections.emplace_back("BENC", tensor_bytes(1, p.enc_bias.size(), p.enc_bias));
  sections.emplace_back("THRS", tensor_bytes(1, p.thresholds.size(), p.thresholds));
  sections.emplace_back("THEM", tensor_bytes(1, p.threshold_ema.size(), p.threshold_ema));
  const double final_loss[] = {cp.final_loss};
  sections.emplace_back("FLOS", tensor_bytes(1, 1, final_loss));
  sections.emplace_back("TLOS", tensor_bytes(1, cp.train_loss.size(), cp.train_loss));
  sections.emplace_back("VLOS", tensor_bytes(1, cp.val_loss.size(), cp.val_loss));
  const std::size_t levels = cp.sae.levels();
  std::vector<double> trace;
  for (const auto& row : cp.threshold_trace) {
    if (row.size() != levels) throw DataError("checkpoint: threshold trace row has wrong length");
    trace.insert(trace.end(), row.begin(), row.end());
  }
  sections.emplace_back("TRAC", tensor_bytes(cp.threshold_trace.size(), levels, trace));

  write_magic(out, kCheckpointMagic);
  write_u32(out, kCheckpointVersion);
  write_u32(out, static_cast<std::uint32_t>(sections.size()));
  for (const auto& [tag, payload] : sections) {
    write_magic(out, tag);
    write_u64(out, payload.size());
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  expect_magic(in, kCheckpointMagic, "checkpoint");
  std::map<std::string, std::string> sections;
  try {
    const auto version = read_u32(in);
    if (version != kCheckpointVersion)
      throw VersionError("checkpoint: unsupported version " + std::to_string(version) + " (this build reads " +
                         std::to_string(kCheckpointVersion) + ")");
    const auto count = read_u32(in);
    for (std::uint32_t s = 0; s < count; ++s) {
      const auto tag_bytes = read_bytes(in, 4);
      const auto length = read_u64(in);
      if (length > (1ull << 40)) throw CorruptFileError("checkpoint: implausible section length");
      const auto payload = read_bytes(in, length);
      sections[std::string(tag_bytes.begin(), tag_bytes.end())] = std::string(payload.begin(), payload.end());
    }
  } catch (const VersionError&) {
    throw;
  } catch (const CorruptFileError&) {
    throw CorruptFileError("checkpoint: file is truncated or corrupt");
  }

  auto section = [&](const char* tag) -> const std::string& {
    const auto it = sections.find(tag);
    if (it == sections.end()) throw CorruptFileError(std::string("checkpoint: missing section ") + tag);
    return it->second;
  };

  Checkpoint cp;
  try {
    const auto j = json::parse(section("CONF"));
    cp.sae.input_dim = j.at("sae").at("input_dim").get<std::size_t>();
    cp.sae.dict_sizes = j.at("sae").at("dict_sizes").get<std::vector<std::size_t>>();
    cp.sae.k_values = j.at("sae").at("k_values").get<std::vector<std::size_t>>();
    const auto& t = j.at("train");
    cp.train.lr0 = t.at("lr0").get<double>();
    cp.train.lr_min = t.at("lr_min").get<double>();
    cp.train.epochs = t.at("epochs").get<std::size_t>();
    cp.train.batch_size = t.at("batch_size").get<std::size_t>();
    cp.train.adam_beta1 = t.at("adam_beta1").get<double>();
    cp.train.adam_beta2 = t.at("adam_beta2").get<double>();
    cp.train.adam_eps = t.at("adam_eps").get<double>();
    cp.train.seed = t.at("seed").get<std::uint64_t>();
    cp.train.threshold_momentum = t.at("threshold_momentum").get<double>();
    cp.epochs_completed = j.at("epochs_completed").get<std::size_t>();
    cp.params.threshold_steps = j.at("threshold_steps").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw CorruptFileError(std::string("checkpoint: bad CONF section: ") + e.what());
  }
  cp.sae.validate();

  cp.params.weights = as_matrix(parse_tensor(section("W___"), "W___"));
  cp.params.pre_bias = as_vector(parse_tensor(section("BPRE"), "BPRE"));
  cp.params.enc_bias = as_vector(parse_tensor(section("BENC"), "BENC"));
  cp.params.thresholds = as_vector(parse_tensor(section("THRS"), "THRS"));
  cp.params.threshold_ema = as_vector(parse_tensor(section("THEM"), "THEM"));
  const auto final_loss = parse_tensor(section("FLOS"), "FLOS");
  if (final_loss.values.size() != 1) throw CorruptFileError("checkpoint: FLOS must hold one value");
  cp.final_loss = final_loss.values[0];
  cp.train_loss = as_vector(parse_tensor(section("TLOS"), "TLOS"));
  cp.val_loss = as_vector(parse_tensor(section("VLOS"), "VLOS"));
  const auto trace = parse_tensor(section("TRAC"), "TRAC");
  for (std::uint64_t r = 0; r < trace.rows; ++r)
    cp.threshold_trace.emplace_back(trace.values.begin() + static_cast<std::ptrdiff_t>(r * trace.cols),
                                    trace.values.begin() + static_cast<std::ptrdiff_t>((r + 1) * trace.cols));

  const auto& s = cp.sae;
  if (cp.params.weights.rows() != s.dict_size() || cp.params.weights.cols() != s.input_dim ||
      cp.params.pre_bias.size() != s.input_dim || cp.params.enc_bias.size() != s.dict_size() ||
      cp.params.thresholds.size() != s.levels() || cp.params.threshold_ema.size() != s.levels())
    throw CorruptFileError("checkpoint: tensor shapes disagree with the stored config");
  return cp;
}

void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  write_checkpoint(out, cp);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace sail
