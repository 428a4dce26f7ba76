#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dlm/checkpoint.hpp"
#include "dlm/train.hpp"

using namespace dlm;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

ModelDims tiny_dims() {
  ModelDims d;
  d.d_model = 32;
  d.n_layers = 2;
  d.n_heads = 2;
  d.d_ff = 64;
  d.n_sectors = 6;
  return d;
}

}  // namespace

TEST_CASE("model checkpoint round trip is exact") {
  EncoderConfig enc;
  Model<float> model = init_model<float>(tiny_dims(), enc, 31);
  const std::string path = temp_path("dlm_test_base.tdlm");
  save_checkpoint(path, model_to_checkpoint(model, 31));

  Model<float> loaded = model_from_checkpoint(load_checkpoint(path));
  CHECK(loaded.dims.d_model == 32);
  CHECK(loaded.dims.n_sectors == 6);
  CHECK(base_checksum(loaded) == base_checksum(model));
  std::remove(path.c_str());
}

TEST_CASE("checkpoint writes are deterministic") {
  EncoderConfig enc;
  Model<float> model = init_model<float>(tiny_dims(), enc, 7);
  const std::string p1 = temp_path("dlm_test_a.tdlm");
  const std::string p2 = temp_path("dlm_test_b.tdlm");
  save_checkpoint(p1, model_to_checkpoint(model, 7));
  save_checkpoint(p2, model_to_checkpoint(model, 7));
  CHECK(read_bytes(p1) == read_bytes(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("loader rejects corruption and wrong magic") {
  EncoderConfig enc;
  Model<float> model = init_model<float>(tiny_dims(), enc, 5);
  const std::string path = temp_path("dlm_test_corrupt.tdlm");
  save_checkpoint(path, model_to_checkpoint(model, 5));

  // Flip one payload byte: the checksum must catch it.
  {
    std::string bytes = read_bytes(path);
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x40);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  try {
    load_checkpoint(path);
    FAIL("expected BadCheckpoint");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadCheckpoint);
  }

  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "NOPEimmaterial-bytes-here-padding";
  }
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  std::remove(path.c_str());
}

TEST_CASE("task checkpoint round trip") {
  const ModelDims dims = tiny_dims();
  TaskCheckpoint ckpt;
  ckpt.base_ref = 0xdeadbeefcafef00dull;
  ckpt.task_id = 42;
  ckpt.target_col = 3;
  ckpt.n_classes = 3;
  ckpt.adapters = init_adapters<float>(dims, 9);
  ckpt.head.Wq = Eigen::MatrixXf::Random(dims.d_model, dims.d_model);
  ckpt.head.Wk = Eigen::MatrixXf::Random(dims.d_model, dims.d_model);
  ckpt.head.E_lab = Eigen::MatrixXf::Random(dims.n_classes_max, dims.d_model);
  ckpt.head.temp = Eigen::MatrixXf::Constant(1, 1, 1.0f);
  ckpt.head.W_out = Eigen::MatrixXf::Random(dims.d_model, dims.n_classes_max);
  ckpt.head.amp = Eigen::MatrixXf::Constant(1, 1, 4.0f);
  MemoryEntry entry;
  entry.task_id = 42;
  entry.n_classes = 3;
  entry.prototype = Eigen::VectorXf::Random(dims.d_model);
  entry.head = ckpt.head;
  ckpt.memory.push_back(entry);

  const std::string path = temp_path("dlm_test_task.tdlm");
  save_checkpoint(path, task_checkpoint_to_data(ckpt));
  TaskCheckpoint loaded = task_checkpoint_from_data(load_checkpoint(path), dims);
  CHECK(loaded.base_ref == ckpt.base_ref);
  CHECK(loaded.task_id == 42);
  CHECK(loaded.target_col == 3);
  CHECK(loaded.n_classes == 3);
  REQUIRE(loaded.memory.size() == 1);
  CHECK((loaded.head.Wq - ckpt.head.Wq).norm() == 0.0f);
  CHECK((loaded.memory[0].prototype - entry.prototype).norm() == 0.0f);
  CHECK((loaded.adapters.blocks[1].down - ckpt.adapters.blocks[1].down).norm() == 0.0f);
  std::remove(path.c_str());
}
