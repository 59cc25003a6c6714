#include "cxnlm/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "cxnlm/error.hpp"
#include "cxnlm/io.hpp"

namespace cxnlm {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

Transformer<float> Checkpoint::model() const {
  Transformer<float> m(config);
  if (params.size() != m.params().size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(params.size()) + " values, config needs " +
                          std::to_string(m.params().size()));
  }
  m.params().assign(params.begin(), params.end());
  return m;
}

namespace {

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos, const std::string& what) {
  if (in.size() - pos < sizeof(T)) throw CheckpointError("truncated checkpoint while reading " + what);
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const ParamLayout layout(ck.config);
  if (ck.params.size() != layout.total()) throw CheckpointError("parameter buffer does not match config");
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : layout.tensors()) tensors.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  const nlohmann::json header{{"config", ck.config.to_json()},
                              {"tokenizer_hash", ck.tokenizer_hash},
                              {"step", ck.step},
                              {"fraction", ck.fraction},
                              {"tensors", tensors}};
  const std::string header_text = header.dump();

  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, header_text.size());
  out += header_text;
  const std::size_t data_at = out.size();
  out.resize(data_at + ck.params.size() * sizeof(float));
  std::memcpy(out.data() + data_at, ck.params.data(), ck.params.size() * sizeof(float));
  io::write_file(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::string in;
  try {
    in = io::read_file(path);
  } catch (const Error& e) {
    throw CheckpointError(e.what());
  }
  const std::string where = " in " + path.string();
  if (in.size() < sizeof kCheckpointMagic || std::memcmp(in.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw CheckpointError("bad magic bytes" + where);
  }
  std::size_t pos = sizeof kCheckpointMagic;
  const auto version = take<std::uint32_t>(in, pos, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + where);
  }
  const auto header_len = take<std::uint64_t>(in, pos, "header length");
  if (in.size() - pos < header_len) throw CheckpointError("truncated checkpoint header" + where);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("unreadable checkpoint header: ") + e.what() + where);
  }
  pos += header_len;

  Checkpoint ck;
  try {
    ck.config = ModelConfig::from_json(header.at("config"));
    ck.config.validate();
    ck.tokenizer_hash = header.at("tokenizer_hash").get<std::string>();
    ck.step = header.at("step").get<std::int64_t>();
    ck.fraction = header.at("fraction").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("incomplete checkpoint header: ") + e.what() + where);
  } catch (const ModelError& e) {
    throw CheckpointError(std::string("invalid model config: ") + e.what() + where);
  }
  const ParamLayout layout(ck.config);
  const auto& tensors = header.value("tensors", nlohmann::json::array());
  if (tensors.size() != layout.tensors().size()) throw CheckpointError("tensor list does not match config" + where);
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = layout.tensors()[i];
    if (tensors[i].value("name", "") != t.name || tensors[i].value("rows", -1) != t.rows ||
        tensors[i].value("cols", -1) != t.cols) {
      throw CheckpointError("tensor '" + t.name + "' has unexpected name or shape" + where);
    }
  }
  const std::size_t bytes = layout.total() * sizeof(float);
  if (in.size() - pos < bytes) throw CheckpointError("truncated checkpoint data" + where);
  if (in.size() - pos > bytes) throw CheckpointError("trailing bytes after checkpoint data" + where);
  ck.params.resize(layout.total());
  std::memcpy(ck.params.data(), in.data() + pos, bytes);
  return ck;
}

}  // namespace cxnlm
