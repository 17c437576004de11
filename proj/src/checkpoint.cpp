// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthlab/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

namespace depthlab {
namespace {

constexpr char kMagic[8] = {'D', 'E', 'P', 'T', 'H', 'L', 'A', 'B'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_string(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::filesystem::path& path) : bytes_(bytes), path_(path) {}

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail(ErrorCode::Format, "truncated checkpoint: " + path_.string());
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void floats(std::vector<float>& out, std::size_t n) {
    if (n > (bytes_.size() - pos_) / 4) fail(ErrorCode::Format, "truncated checkpoint blob: " + path_.string());
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t u = u32();
      std::memcpy(&out[i], &u, 4);
    }
  }
  void magic() {
    need(8);
    if (std::memcmp(bytes_.data(), kMagic, 8) != 0) fail(ErrorCode::Format, "not a depthlab checkpoint: " + path_.string());
    pos_ = 8;
  }

 private:
  const std::string& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const CheckpointFile& file) {
  std::string out(kMagic, 8);
  put_u32(out, kCheckpointVersion);
  put_string(out, file.kind);
  put_string(out, file.config.to_string());
  put_u32(out, static_cast<std::uint32_t>(file.blobs.size()));
  for (const Blob& b : file.blobs) {
    put_string(out, b.name);
    for (int d : b.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (float f : b.data) {
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      put_u32(out, u);
    }
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::Io, "cannot write checkpoint " + path.string());
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) fail(ErrorCode::Io, "checkpoint write failed: " + path.string());
}

CheckpointFile load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::MissingCheckpoint, "cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  Reader r(bytes, path);
  r.magic();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    fail(ErrorCode::Format, "unsupported checkpoint version " + std::to_string(version));
  CheckpointFile file;
  file.kind = r.str();
  file.config = KeyValues::parse(r.str());
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    Blob b;
    b.name = r.str();
    std::size_t count = 1;
    for (int& d : b.shape) {
      d = static_cast<int>(r.u32());
      count *= static_cast<std::size_t>(d);
    }
    r.floats(b.data, count);
    file.blobs.push_back(std::move(b));
  }
  return file;
}

std::vector<Blob> export_parameters(const std::vector<nn::Parameter<float>>& params) {
  std::vector<Blob> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    const auto& t = p.var->value;
    out.push_back({p.name, {t.n, t.c, t.h, t.w}, t.data});
  }
  return out;
}

void import_parameters(const std::vector<Blob>& blobs, std::vector<nn::Parameter<float>>& params) {
  std::unordered_map<std::string, const Blob*> by_name;
  for (const Blob& b : blobs) by_name[b.name] = &b;
  for (auto& p : params) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) fail(ErrorCode::Format, "checkpoint lacks parameter '" + p.name + "'");
    auto& t = p.var->value;
    const Blob& b = *it->second;
    if (b.shape != std::array<int, 4>{t.n, t.c, t.h, t.w})
      fail(ErrorCode::Format, "checkpoint parameter '" + p.name + "' has the wrong shape");
    t.data = b.data;
  }
  if (by_name.size() != params.size()) fail(ErrorCode::Format, "checkpoint has unexpected parameters");
}

}  // namespace depthlab
