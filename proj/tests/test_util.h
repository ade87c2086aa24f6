#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "xdfm/data.h"

namespace xdfm::test_util {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::path(XDFM_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void spit(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline SchemaConfig uni_schema(std::size_t fields) {
  SchemaConfig c;
  for (std::size_t f = 0; f < fields; ++f) c.fields.push_back({"f" + std::to_string(f), Arity::kUnivalent});
  return c;
}

// Synthetic data whose label depends only on the given interaction terms.
inline SyntheticSpec interaction_spec(std::vector<std::vector<std::size_t>> terms, double weight,
                                      std::size_t n, std::uint64_t seed) {
  SyntheticSpec s;
  s.fields = 4;
  s.vocab_per_field = 8;
  s.latent_dim = 4;
  s.n_instances = n;
  s.seed = seed;
  for (auto& t : terms) s.terms.push_back({t, weight});
  return s;
}

}  // namespace xdfm::test_util
