// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gmjo/util.hpp"

namespace gmjo {

// All binary formats in this project are little-endian; these helpers assume
// a little-endian host.

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is, const char* what) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  check(bool(is), "truncated input while reading ", what);
  return v;
}

template <class T>
void write_array(std::ostream& os, const std::vector<T>& v) {
  os.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(T)));
}

template <class T>
std::vector<T> read_array(std::istream& is, std::size_t n, const char* what) {
  std::vector<T> v(n);
  is.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * sizeof(T)));
  check(bool(is), "truncated input while reading ", what);
  return v;
}

inline std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(bool(f), "cannot open '", path, "'");
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline void spit(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  check(bool(f), "cannot write '", path, "'");
  f << content;
  check(bool(f), "failed writing '", path, "'");
}

}  // namespace gmjo
