// Copyright 2026 The lagmpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Checkpoint file layout:
//
//   lagmpc-checkpoint v1\n
//   meta <key>=<value>\n                              (any number)
//   tensor name=<name> shape=<rows>x<cols> offset=<bytes>\n   (any number)
//   data\n
//   <raw little-endian float64 payload, row-major per tensor>
//
// Offsets are relative to the first payload byte. Save/load is bit-exact.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lagmpc/diffnet/mlp.hpp"

namespace lagmpc::diffnet {

class Checkpoint {
 public:
  static constexpr const char* kMagic = "lagmpc-checkpoint v1";

  void set_meta(const std::string& key, const std::string& value) {
    require(key.find_first_of("= \n") == std::string::npos, ErrorKind::kInvalidArg,
            "checkpoint meta key must not contain '=', space or newline: " + key);
    require(value.find('\n') == std::string::npos, ErrorKind::kInvalidArg,
            "checkpoint meta value must be a single line");
    meta_[key] = value;
  }
  bool has_meta(const std::string& key) const { return meta_.count(key) != 0; }
  const std::string& meta(const std::string& key) const {
    auto it = meta_.find(key);
    require(it != meta_.end(), ErrorKind::kIo, "checkpoint missing meta key '" + key + "'");
    return it->second;
  }
  const std::map<std::string, std::string>& all_meta() const { return meta_; }

  void set_tensor(const std::string& name, Matrix value) {
    require(name.find_first_of(" \n") == std::string::npos, ErrorKind::kInvalidArg,
            "tensor name must not contain whitespace: " + name);
    for (auto& [n, m] : tensors_) {
      if (n == name) {
        m = std::move(value);
        return;
      }
    }
    tensors_.emplace_back(name, std::move(value));
  }
  bool has_tensor(const std::string& name) const {
    for (const auto& t : tensors_)
      if (t.first == name) return true;
    return false;
  }
  const Matrix& tensor(const std::string& name) const {
    for (const auto& t : tensors_)
      if (t.first == name) return t.second;
    throw Error(ErrorKind::kIo, "checkpoint missing tensor '" + name + "'");
  }
  const std::vector<std::pair<std::string, Matrix>>& tensors() const { return tensors_; }

  void put_mlp(const std::string& prefix, const Mlp& net) {
    std::string sizes;
    for (std::size_t i = 0; i < net.layer_sizes().size(); ++i) {
      if (i) sizes += ",";
      sizes += std::to_string(net.layer_sizes()[i]);
    }
    set_meta(prefix + ".layer_sizes", sizes);
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      set_tensor(prefix + "/W" + std::to_string(l), net.layer(l).weight);
      set_tensor(prefix + "/b" + std::to_string(l), net.layer(l).bias);
    }
    set_tensor(prefix + "/input_shift", net.input_shift());
    set_tensor(prefix + "/input_scale", net.input_scale());
    set_tensor(prefix + "/output_shift", net.output_shift());
    set_tensor(prefix + "/output_scale", net.output_scale());
  }

  Mlp get_mlp(const std::string& prefix) const {
    std::vector<Index> sizes;
    std::stringstream ss(meta(prefix + ".layer_sizes"));
    std::string tok;
    while (std::getline(ss, tok, ',')) sizes.push_back(std::stoll(tok));
    Mlp net(sizes);
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      const Matrix& W = tensor(prefix + "/W" + std::to_string(l));
      const Matrix& b = tensor(prefix + "/b" + std::to_string(l));
      require(W.rows() == net.layer(l).weight.rows() && W.cols() == net.layer(l).weight.cols(),
              ErrorKind::kIo, "checkpoint tensor shape mismatch for " + prefix);
      require(b.size() == net.layer(l).bias.size(), ErrorKind::kIo,
              "checkpoint tensor shape mismatch for " + prefix);
      net.layer(l).weight = W;
      net.layer(l).bias = b.col(0);
    }
    net.set_input_normalization(tensor(prefix + "/input_shift").col(0),
                                tensor(prefix + "/input_scale").col(0));
    net.set_output_affine(tensor(prefix + "/output_shift").col(0),
                          tensor(prefix + "/output_scale").col(0));
    return net;
  }

  void save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot write checkpoint " + path.string());
    out << kMagic << "\n";
    for (const auto& [k, v] : meta_) out << "meta " << k << "=" << v << "\n";
    std::uint64_t offset = 0;
    for (const auto& [name, m] : tensors_) {
      out << "tensor name=" << name << " shape=" << m.rows() << "x" << m.cols()
          << " offset=" << offset << "\n";
      offset += static_cast<std::uint64_t>(m.size()) * 8;
    }
    out << "data\n";
    for (const auto& [name, m] : tensors_) {
      for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) write_le(out, m(i, j));
    }
    require(static_cast<bool>(out), ErrorKind::kIo, "failed writing checkpoint " + path.string());
  }

  static Checkpoint load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::kIo, "cannot open checkpoint " + path.string());
    std::string line;
    std::getline(in, line);
    require(line == kMagic, ErrorKind::kIo, "not a lagmpc checkpoint: " + path.string());
    Checkpoint ck;
    struct Entry {
      std::string name;
      Index rows, cols;
      std::uint64_t offset;
    };
    std::vector<Entry> entries;
    while (std::getline(in, line)) {
      if (line == "data") break;
      if (line.rfind("meta ", 0) == 0) {
        const auto eq = line.find('=');
        require(eq != std::string::npos, ErrorKind::kIo, "malformed meta line: " + line);
        ck.meta_[line.substr(5, eq - 5)] = line.substr(eq + 1);
      } else if (line.rfind("tensor ", 0) == 0) {
        std::stringstream ss(line.substr(7));
        std::string tok;
        Entry e{};
        while (ss >> tok) {
          const auto eq = tok.find('=');
          require(eq != std::string::npos, ErrorKind::kIo, "malformed tensor line: " + line);
          const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
          if (key == "name") {
            e.name = val;
          } else if (key == "shape") {
            const auto x = val.find('x');
            e.rows = std::stoll(val.substr(0, x));
            e.cols = std::stoll(val.substr(x + 1));
          } else if (key == "offset") {
            e.offset = std::stoull(val);
          }
        }
        entries.push_back(e);
      } else {
        throw Error(ErrorKind::kIo, "unrecognized checkpoint header line: " + line);
      }
    }
    require(line == "data", ErrorKind::kIo, "checkpoint header not terminated: " + path.string());
    const auto base = in.tellg();
    for (const auto& e : entries) {
      in.seekg(base + static_cast<std::streamoff>(e.offset));
      Matrix m(e.rows, e.cols);
      for (Index i = 0; i < e.rows; ++i)
        for (Index j = 0; j < e.cols; ++j) m(i, j) = read_le(in);
      require(static_cast<bool>(in), ErrorKind::kIo, "truncated checkpoint payload for " + e.name);
      ck.tensors_.emplace_back(e.name, std::move(m));
    }
    return ck;
  }

 private:
  static void write_le(std::ostream& out, double x) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
  static double read_le(std::istream& in) {
    unsigned char bytes[8] = {};
    in.read(reinterpret_cast<char*>(bytes), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return std::bit_cast<double>(bits);
  }

  std::map<std::string, std::string> meta_;
  std::vector<std::pair<std::string, Matrix>> tensors_;
};

}  // namespace lagmpc::diffnet
