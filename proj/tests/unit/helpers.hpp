#pragma once

#include <doctest.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "gnnvault/container.hpp"
#include "gnnvault/error.hpp"
#include "gnnvault/graph.hpp"

namespace testing {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(GNNVAULT_FIXTURE_DIR) / name;
}

inline gnnvault::Graph make_graph(gnnvault::DenseMatrix x, std::vector<gnnvault::Edge> pairs,
                                  std::vector<std::uint16_t> labels, std::size_t n_classes) {
  std::size_t n = x.rows();
  auto edges = gnnvault::canonical_undirected(std::move(pairs), n);
  return gnnvault::Graph(std::move(x), std::move(edges), std::move(labels), n_classes, {});
}

inline gnnvault::DenseMatrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed,
                                           float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  gnnvault::DenseMatrix m(r, c);
  for (float& v : m.values()) v = u(rng);
  return m;
}

inline gnnvault::SbmParams small_sbm(std::uint64_t seed = 3) {
  gnnvault::SbmParams p;
  p.n_per_class = 40;
  p.n_classes = 3;
  p.p_in = 0.2;
  p.p_out = 0.01;
  p.feat_dim = 12;
  p.feat_noise = 1.0;
  p.train_per_class = 10;
  p.seed = seed;
  return p;
}

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() /
           ("gnnvault-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace testing

#define CHECK_ERROR_CODE(expr, expected_code)                         \
  do {                                                                \
    bool thrown_ = false;                                             \
    try {                                                             \
      (void)(expr);                                                   \
    } catch (const gnnvault::Error& e_) {                             \
      thrown_ = true;                                                 \
      CHECK_MESSAGE(e_.code() == (expected_code), e_.what());         \
    }                                                                 \
    CHECK_MESSAGE(thrown_, "expected gnnvault::Error from " #expr);   \
  } while (0)
