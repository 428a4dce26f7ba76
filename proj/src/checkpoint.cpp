#include "dlm/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "dlm/hash.hpp"

namespace dlm {

namespace {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  Reader(const std::string& buf) : buf_(buf) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(u_bytes(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(u_bytes(4)); }
  std::uint64_t u64() { return u_bytes(8); }

  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  std::string bytes(std::size_t n) {
    require(pos_ + n <= buf_.size(), ErrorCode::BadCheckpoint, "truncated checkpoint");
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }

 private:
  std::uint64_t u_bytes(int n) {
    require(pos_ + n <= buf_.size(), ErrorCode::BadCheckpoint, "truncated checkpoint");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += n;
    return v;
  }

  const std::string& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& data) {
  std::string out;
  out += "TDLM";
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(data.meta.size()));
  for (const auto& [key, value] : data.meta) {
    put_u16(out, static_cast<std::uint16_t>(key.size()));
    out += key;
    put_u64(out, static_cast<std::uint64_t>(value));
  }
  put_u32(out, static_cast<std::uint32_t>(data.sections.size()));
  for (const auto& [name, m] : data.sections) {
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put_u64(out, static_cast<std::uint64_t>(m.rows()));
    put_u64(out, static_cast<std::uint64_t>(m.cols()));
  }
  for (const auto& [name, m] : data.sections) {
    for (Eigen::Index i = 0; i < m.size(); ++i) put_f32(out, m.data()[i]);
  }
  put_u64(out, fnv1a64(out.data(), out.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorCode::IoFailure, "cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  require(f.good(), ErrorCode::IoFailure, "write failed for " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorCode::IoFailure, "cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  require(buf.size() >= 16, ErrorCode::BadCheckpoint, "file too small");

  const std::uint64_t stored = [&] {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(buf[buf.size() - 8 + i]))
           << (8 * i);
    }
    return v;
  }();
  require(fnv1a64(buf.data(), buf.size() - 8) == stored, ErrorCode::BadCheckpoint,
          "checksum mismatch in " + path);

  Reader r(buf);
  require(r.bytes(4) == "TDLM", ErrorCode::BadCheckpoint, "bad magic in " + path);
  const std::uint32_t version = r.u32();
  require(version == kCheckpointVersion, ErrorCode::BadCheckpoint,
          "unsupported checkpoint version " + std::to_string(version));

  CheckpointData data;
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    const auto klen = r.u16();
    const std::string key = r.bytes(klen);
    data.meta[key] = static_cast<std::int64_t>(r.u64());
  }
  const std::uint32_t n_sections = r.u32();
  std::vector<std::pair<std::string, std::pair<std::uint64_t, std::uint64_t>>> index;
  for (std::uint32_t i = 0; i < n_sections; ++i) {
    const auto nlen = r.u16();
    const std::string name = r.bytes(nlen);
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    index.emplace_back(name, std::make_pair(rows, cols));
  }
  for (const auto& [name, shape] : index) {
    Eigen::MatrixXf m(static_cast<Eigen::Index>(shape.first),
                      static_cast<Eigen::Index>(shape.second));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f32();
    data.sections.emplace_back(name, std::move(m));
  }
  return data;
}

namespace {

std::int64_t meta_or(const CheckpointData& d, const std::string& key, std::int64_t fallback) {
  auto it = d.meta.find(key);
  return it == d.meta.end() ? fallback : it->second;
}

std::int64_t meta_req(const CheckpointData& d, const std::string& key) {
  auto it = d.meta.find(key);
  require(it != d.meta.end(), ErrorCode::BadCheckpoint, "missing meta key " + key);
  return it->second;
}

}  // namespace

CheckpointData model_to_checkpoint(const Model<float>& model, std::uint64_t train_seed) {
  CheckpointData data;
  const ModelDims& d = model.dims;
  data.meta["d_sem"] = d.d_sem;
  data.meta["d_cell"] = d.d_cell;
  data.meta["d_model"] = d.d_model;
  data.meta["n_layers"] = d.n_layers;
  data.meta["n_heads"] = d.n_heads;
  data.meta["d_ff"] = d.d_ff;
  data.meta["n_sectors"] = d.n_sectors;
  data.meta["n_classes_max"] = d.n_classes_max;
  data.meta["adapter_rank"] = d.adapter_rank;
  data.meta["hash_seed"] = static_cast<std::int64_t>(model.encoder.hash_seed);
  data.meta["seed"] = static_cast<std::int64_t>(train_seed);
  ParamSet<float> set = const_cast<Model<float>&>(model).params.param_set();
  for (const auto& [name, m] : set.items) data.sections.emplace_back(name, *m);
  return data;
}

Model<float> model_from_checkpoint(const CheckpointData& data) {
  ModelDims dims;
  dims.d_sem = static_cast<int>(meta_req(data, "d_sem"));
  dims.d_cell = static_cast<int>(meta_req(data, "d_cell"));
  dims.d_model = static_cast<int>(meta_req(data, "d_model"));
  dims.n_layers = static_cast<int>(meta_req(data, "n_layers"));
  dims.n_heads = static_cast<int>(meta_req(data, "n_heads"));
  dims.d_ff = static_cast<int>(meta_req(data, "d_ff"));
  dims.n_sectors = static_cast<int>(meta_req(data, "n_sectors"));
  dims.n_classes_max = static_cast<int>(meta_req(data, "n_classes_max"));
  dims.adapter_rank = static_cast<int>(meta_req(data, "adapter_rank"));
  EncoderConfig enc;
  enc.d_sem = dims.d_sem;
  enc.d_cell = dims.d_cell;
  enc.hash_seed = static_cast<std::uint64_t>(meta_or(data, "hash_seed", 0x5eed));

  Model<float> model = init_model<float>(dims, enc, 0);
  ParamSet<float> set = model.params.param_set();
  std::map<std::string, Eigen::MatrixXf*> by_name;
  for (auto& [name, m] : set.items) by_name[name] = m;
  std::size_t loaded = 0;
  for (const auto& [name, m] : data.sections) {
    auto it = by_name.find(name);
    if (it == by_name.end()) continue;
    require(it->second->rows() == m.rows() && it->second->cols() == m.cols(),
            ErrorCode::BadCheckpoint, "section shape mismatch: " + name);
    *it->second = m;
    ++loaded;
  }
  require(loaded == by_name.size(), ErrorCode::BadCheckpoint,
          "checkpoint is missing model sections");
  return model;
}

std::uint64_t base_checksum(const Model<float>& model) {
  return param_checksum<float>(const_cast<Model<float>&>(model).params.param_set());
}

}  // namespace dlm
