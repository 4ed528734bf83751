#include "nacrf/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace nacrf {
namespace {

constexpr char kMagic[8] = {'N', 'A', 'C', 'R', 'F', 'C', 'K', 'P'};
using Kind = CheckpointError::Kind;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  void u32(std::uint32_t v) { raw(&v, 4); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  [[nodiscard]] const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : buf_(std::move(data)) {}
  void raw(void* p, std::size_t n) {
    if (n > buf_.size() - pos_) throw CheckpointError(Kind::truncated, "checkpoint truncated");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::string str() {
    const auto n = u32();
    if (n > buf_.size() - pos_) throw CheckpointError(Kind::truncated, "checkpoint truncated");
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  [[nodiscard]] bool done() const { return pos_ == buf_.size(); }

 private:
  std::string buf_;
  std::size_t pos_ = 0;
};

void write_tensor(Writer& w, const std::string& name, const Mat<float>& t) {
  w.str(name);
  w.u32(2);
  w.u32(static_cast<std::uint32_t>(t.rows()));
  w.u32(static_cast<std::uint32_t>(t.cols()));
  w.raw(t.data(), static_cast<std::size_t>(t.size()) * sizeof(float));
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += '\n';
    out += tokens[i];
  }
  return out;
}

std::vector<std::string> split_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto nl = s.find('\n', start);
    out.push_back(s.substr(start, nl == std::string::npos ? std::string::npos : nl - start));
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  return out;
}

}  // namespace

std::map<std::string, std::string> encoder_fields(const EncoderConfig& c) {
  std::ostringstream dropout;
  dropout.precision(17);
  dropout << c.dropout_rate;
  return {{"num_layers", std::to_string(c.num_layers)},
          {"model_dim", std::to_string(c.model_dim)},
          {"num_heads", std::to_string(c.num_heads)},
          {"ffn_dim", std::to_string(c.ffn_dim)},
          {"max_positions", std::to_string(c.max_positions)},
          {"dropout_rate", dropout.str()},
          {"vocab_size", std::to_string(c.vocab_size)},
          {"crf_rank", std::to_string(c.crf_rank)}};
}

EncoderConfig encoder_from_fields(const std::map<std::string, std::string>& f) {
  const auto get = [&](const char* key) -> const std::string& {
    auto it = f.find(key);
    if (it == f.end()) throw CheckpointError(Kind::malformed, std::string("checkpoint header lacks ") + key);
    return it->second;
  };
  EncoderConfig c;
  try {
    c.num_layers = std::stoi(get("num_layers"));
    c.model_dim = std::stoi(get("model_dim"));
    c.num_heads = std::stoi(get("num_heads"));
    c.ffn_dim = std::stoi(get("ffn_dim"));
    c.max_positions = std::stoi(get("max_positions"));
    c.dropout_rate = std::stod(get("dropout_rate"));
    c.vocab_size = std::stoi(get("vocab_size"));
    c.crf_rank = std::stoi(get("crf_rank"));
    c.validate();
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(Kind::malformed, std::string("bad encoder config in checkpoint: ") + e.what());
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);

  auto header = encoder_fields(ck.encoder);
  header["vocab"] = join_tokens(ck.vocab_tokens);
  for (const auto& [k, v] : ck.meta) header.emplace("meta." + k, v);
  w.u32(static_cast<std::uint32_t>(header.size()));
  for (const auto& [k, v] : header) {
    w.str(k);
    w.str(v);
  }

  std::uint32_t count = 0;
  Writer tensors;
  ck.params.for_each([&](const std::string& name, const Mat<float>& t) {
    write_tensor(tensors, name, t);
    ++count;
  });
  if (ck.optimizer) {
    ck.optimizer->m.for_each([&](const std::string& name, const Mat<float>& t) {
      write_tensor(tensors, "optim.m." + name, t);
      ++count;
    });
    ck.optimizer->v.for_each([&](const std::string& name, const Mat<float>& t) {
      write_tensor(tensors, "optim.v." + name, t);
      ++count;
    });
  }
  w.u32(count);
  w.raw(tensors.bytes().data(), tensors.bytes().size());

  const std::uint64_t step = ck.optimizer ? ck.optimizer->step : 0;
  std::string step_bytes(8, '\0');
  std::memcpy(step_bytes.data(), &step, 8);
  w.u32(2);
  w.str("step");
  w.str(step_bytes);
  w.str("rng_state");
  w.str(ck.rng_state);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(Kind::io, "cannot write checkpoint " + tmp);
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw CheckpointError(Kind::io, "short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw CheckpointError(Kind::io, "cannot rename onto " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::io, "cannot open checkpoint " + path);
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));

  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(Kind::bad_magic, path + " is not a checkpoint (bad magic)");
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::version_mismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                      std::to_string(kCheckpointVersion));
  }

  std::map<std::string, std::string> header;
  for (auto n = r.u32(); n > 0; --n) {
    auto key = r.str();
    header[key] = r.str();
  }
  Checkpoint ck;
  ck.encoder = encoder_from_fields(header);
  if (auto it = header.find("vocab"); it != header.end()) ck.vocab_tokens = split_tokens(it->second);
  for (const auto& [k, v] : header) {
    if (k.starts_with("meta.")) ck.meta[k.substr(5)] = v;
  }
  if (ck.vocab_tokens.size() != static_cast<std::size_t>(ck.encoder.vocab_size)) {
    throw CheckpointError(Kind::malformed, "checkpoint vocab size disagrees with its config");
  }

  ck.params = zero_params<float>(ck.encoder);
  AdamState<float> adam = make_adam_state<float>(ck.encoder);
  std::map<std::string, Mat<float>*> slots;
  ck.params.for_each([&](const std::string& name, Mat<float>& t) { slots[name] = &t; });
  std::set<std::string> model_names;
  for (const auto& [name, t] : slots) model_names.insert(name);
  adam.m.for_each([&](const std::string& name, Mat<float>& t) { slots["optim.m." + name] = &t; });
  adam.v.for_each([&](const std::string& name, Mat<float>& t) { slots["optim.v." + name] = &t; });

  std::set<std::string> seen;
  for (auto n = r.u32(); n > 0; --n) {
    const auto name = r.str();
    auto it = slots.find(name);
    if (it == slots.end()) throw CheckpointError(Kind::unknown_tensor, "unknown tensor '" + name + "' in checkpoint");
    const auto rank = r.u32();
    std::vector<std::uint32_t> dims(rank);
    for (auto& d : dims) d = r.u32();
    Mat<float>& t = *it->second;
    if (rank != 2 || dims[0] != t.rows() || dims[1] != t.cols()) {
      throw CheckpointError(Kind::bad_shape, "tensor '" + name + "' has an unexpected shape");
    }
    r.raw(t.data(), static_cast<std::size_t>(t.size()) * sizeof(float));
    if (!seen.insert(name).second) throw CheckpointError(Kind::malformed, "duplicate tensor '" + name + "'");
  }
  for (const auto& name : model_names) {
    if (!seen.contains(name)) throw CheckpointError(Kind::missing_tensor, "checkpoint lacks tensor '" + name + "'");
  }
  const bool has_optimizer = seen.size() > model_names.size();
  if (has_optimizer && seen.size() != slots.size()) {
    throw CheckpointError(Kind::missing_tensor, "checkpoint has a partial optimizer state");
  }

  std::uint64_t step = 0;
  for (auto n = r.u32(); n > 0; --n) {
    const auto name = r.str();
    const auto bytes = r.str();
    if (name == "step") {
      if (bytes.size() != 8) throw CheckpointError(Kind::malformed, "bad step record");
      std::memcpy(&step, bytes.data(), 8);
    } else if (name == "rng_state") {
      ck.rng_state = bytes;
    } else {
      throw CheckpointError(Kind::unknown_tensor, "unknown state record '" + name + "'");
    }
  }
  if (!r.done()) throw CheckpointError(Kind::malformed, "trailing bytes after checkpoint records");
  if (has_optimizer) {
    adam.step = step;
    ck.optimizer = std::move(adam);
  }
  return ck;
}

}  // namespace nacrf
