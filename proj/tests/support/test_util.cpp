#include "test_util.hpp"

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

namespace testutil {

invdec::Tensor random_tensor(invdec::Shape shape, std::mt19937_64& rng, double scale) {
  invdec::Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, scale);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

void randomize(invdec::model::ModelParams& params, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> dist(0.0, scale);
  for (auto& p : params.store) {
    const bool gain = p.name.find(".gain") != std::string::npos;
    for (double& v : p.value.data()) v = (gain ? 1.0 : 0.0) + dist(rng);
  }
}

TempDir::TempDir(const std::string& tag) {
  static std::uint64_t counter = 0;
  std::random_device rd;
  const auto base = std::filesystem::temp_directory_path();
  do {
    path_ = base / (tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
  } while (std::filesystem::exists(path_));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

invdec::model::ModelConfig random_config(std::mt19937_64& rng) {
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  invdec::model::ModelConfig c;
  c.variates = pick(1, 5);
  c.patch_len = pick(2, 6);
  c.stride = pick(1, c.patch_len);
  c.lookback = c.patch_len + pick(0, 14);
  c.horizon = pick(1, 6);
  const std::size_t heads = pick(1, 3);
  c.heads = heads;
  c.dec_heads = pick(1, 2) == 1 ? heads : 1;
  c.d_model = heads * pick(1, 3);
  c.enc_layers = pick(0, 2);
  c.dec_layers = pick(0, 2);
  c.ffn_dim = pick(0, 1) ? 0 : pick(2, 8);
  c.dropout = 0.1;
  c.lambda = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return c;
}

void for_all(std::uint64_t seed, int cases,
             const std::function<void(std::mt19937_64&, int)>& check) {
  for (int i = 0; i < cases; ++i) {
    const std::uint64_t case_seed = seed * 1000003ULL + static_cast<std::uint64_t>(i);
    std::mt19937_64 rng(case_seed);
    SCOPED_TRACE("property case " + std::to_string(i) + " (seed " + std::to_string(case_seed) + ")");
    check(rng, i);
    if (::testing::Test::HasFatalFailure()) return;
  }
}

}  // namespace testutil
