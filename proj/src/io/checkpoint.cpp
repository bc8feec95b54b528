// Copyright 2026 The PostNAS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "postnas/io/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "postnas/core/error.hpp"
#include "postnas/io/config_io.hpp"

namespace postnas::io {

namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

constexpr char kMagic[8] = {'P', 'N', 'A', 'S', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& data, std::size_t end, std::string path)
      : data_(data), end_(end), path_(std::move(path)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void floats(std::span<float> out) {
    need(out.size() * sizeof(float));
    std::memcpy(out.data(), data_.data() + pos_, out.size() * sizeof(float));
    pos_ += out.size() * sizeof(float);
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) fail(ErrorKind::Io, path_ + ": truncated checkpoint");
  }

  const std::string& data_;
  std::size_t end_;
  std::string path_;
  std::size_t pos_ = 0;
};

nlohmann::ordered_json block_paths(const model::BlockParams& b) {
  auto j = nlohmann::ordered_json::array();
  if (b.attn) j.push_back("attn");
  if (b.lin) j.push_back("lin:" + std::string(blocks::kind_name(b.lin->config.kind)));
  if (b.jet) j.push_back("jet");
  return j;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const model::ModelParams& params,
                     const std::map<std::string, std::string>& meta) {
  nlohmann::ordered_json header;
  header["config"] = to_json(params.config);
  header["paths"] = nlohmann::ordered_json::array();
  for (const auto& b : params.blocks) header["paths"].push_back(block_paths(b));
  header["meta"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : meta) header["meta"][k] = v;
  const std::string hs = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put(out, kVersion);
  put(out, static_cast<std::uint64_t>(hs.size()));
  out += hs;
  const auto named = params.named();
  put(out, static_cast<std::uint32_t>(named.size()));
  for (const auto& n : named) {
    put(out, static_cast<std::uint32_t>(n.name.size()));
    out += n.name;
    put(out, static_cast<std::uint32_t>(n.tensor.rank()));
    for (auto d : n.tensor.shape()) put(out, static_cast<std::int64_t>(d));
    const auto data = n.tensor.data();
    out.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(float));
  }
  put(out, fnv1a(out));
  write_text_file(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string data = read_text_file(path);
  const std::string where = path.string();
  if (data.size() < sizeof(kMagic) + 8 || std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0)
    fail(ErrorKind::Io, where + ": not a checkpoint file");
  const std::size_t body = data.size() - sizeof(std::uint64_t);
  std::uint64_t stored;
  std::memcpy(&stored, data.data() + body, sizeof(stored));
  if (stored != fnv1a(data.substr(0, body)))
    fail(ErrorKind::Io, where + ": checksum mismatch (corrupt checkpoint)");

  Reader r(data, body, where);
  r.bytes(sizeof(kMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion)
    fail(ErrorKind::Io, where + ": unsupported checkpoint version " + std::to_string(version));
  const auto hlen = r.get<std::uint64_t>();
  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(r.bytes(static_cast<std::size_t>(hlen)));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, where + ": bad header: " + e.what());
  }

  Checkpoint ck;
  try {
    ck.params = model::init_model(model_from_json(header.at("config"), "checkpoint.config"), 0);
    Rng rng(0);
    const auto& paths = header.at("paths");
    if (paths.size() != ck.params.blocks.size())
      fail(ErrorKind::Io, where + ": block path list does not match n_blocks");
    for (std::size_t i = 0; i < paths.size(); ++i) {
      auto& b = ck.params.blocks[i];
      for (const auto& p : paths[i]) {
        const auto s = p.get<std::string>();
        if (s == "attn") {
          if (!b.attn) fail(ErrorKind::Io, where + ": unsupported extra attention path");
        } else if (s == "jet") {
          if (!b.jet) model::add_jet_path(ck.params, static_cast<int>(i), rng);
        } else if (s.rfind("lin:", 0) == 0) {
          const auto kind = blocks::parse_kind(s.substr(4));
          if (!b.lin) model::add_linear_path(ck.params, static_cast<int>(i), kind, rng);
          else if (b.lin->config.kind != kind)
            fail(ErrorKind::Io, where + ": block " + std::to_string(i) + " linear kind mismatch");
        } else {
          fail(ErrorKind::Io, where + ": unknown path '" + s + "'");
        }
      }
    }
    for (const auto& [k, v] : header.at("meta").items()) ck.meta[k] = v.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, where + ": bad header: " + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Io) throw;
    fail(ErrorKind::Io, where + ": " + e.what());
  }

  auto named = ck.params.named();
  const auto count = r.get<std::uint32_t>();
  if (count != named.size())
    fail(ErrorKind::Io, where + ": tensor count " + std::to_string(count) + " does not match " +
                            std::to_string(named.size()) + " expected by the config");
  std::set<std::string> loaded;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name = r.bytes(r.get<std::uint32_t>());
    auto it = std::find_if(named.begin(), named.end(),
                           [&](const NamedTensor& n) { return n.name == name; });
    if (it == named.end() || !loaded.insert(name).second)
      fail(ErrorKind::Io, where + ": unexpected tensor '" + name + "'");
    const auto rank = r.get<std::uint32_t>();
    if (rank != static_cast<std::uint32_t>(it->tensor.rank()))
      fail(ErrorKind::Io, where + ": rank mismatch for '" + name + "'");
    for (std::uint32_t a = 0; a < rank; ++a)
      if (r.get<std::int64_t>() != it->tensor.dim(static_cast<int>(a)))
        fail(ErrorKind::Io, where + ": shape mismatch for '" + name + "'");
    r.floats(it->tensor.mutable_data());
  }
  if (r.pos() != body) fail(ErrorKind::Io, where + ": trailing bytes in checkpoint");
  return ck;
}

}  // namespace postnas::io
