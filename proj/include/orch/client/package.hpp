/* Copyright 2026 The Orch Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef ORCH_CLIENT_PACKAGE_HPP_
#define ORCH_CLIENT_PACKAGE_HPP_

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "orch/core/types.hpp"
#include "orch/util/result.hpp"

namespace orch {
namespace client {

// ---------------------------------------------------------------------------
// SHA-256 (FIPS 180-4), enough for manifest content digests
// ---------------------------------------------------------------------------

namespace sha256detail {

constexpr std::array<std::uint32_t, 64> kRound = {
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4,
    0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe,
    0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f,
    0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
    0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
    0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
    0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116,
    0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
    0xc67178f2};

inline std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

}  // namespace sha256detail

inline std::string sha256_hex(const std::string& data) {
  using namespace sha256detail;
  std::uint32_t h[8] = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                        0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};

  std::string padded = data;
  const std::uint64_t bit_len = static_cast<std::uint64_t>(data.size()) * 8;
  padded.push_back(static_cast<char>(0x80));
  while (padded.size() % 64 != 56) padded.push_back('\0');
  for (int i = 7; i >= 0; --i)
    padded.push_back(static_cast<char>((bit_len >> (i * 8)) & 0xff));

  for (std::size_t block = 0; block < padded.size(); block += 64) {
    std::uint32_t w[64];
    for (int i = 0; i < 16; ++i)
      w[i] = (static_cast<std::uint32_t>(static_cast<unsigned char>(padded[block + i * 4])) << 24) |
             (static_cast<std::uint32_t>(static_cast<unsigned char>(padded[block + i * 4 + 1]))
              << 16) |
             (static_cast<std::uint32_t>(static_cast<unsigned char>(padded[block + i * 4 + 2]))
              << 8) |
             static_cast<std::uint32_t>(static_cast<unsigned char>(padded[block + i * 4 + 3]));
    for (int i = 16; i < 64; ++i) {
      const std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
      const std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
      w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3];
    std::uint32_t e = h[4], f = h[5], g = h[6], hh = h[7];
    for (int i = 0; i < 64; ++i) {
      const std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      const std::uint32_t ch = (e & f) ^ (~e & g);
      const std::uint32_t t1 = hh + s1 + ch + kRound[i] + w[i];
      const std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      const std::uint32_t t2 = s0 + maj;
      hh = g;
      g = f;
      f = e;
      e = d + t1;
      d = c;
      c = b;
      b = a;
      a = t1 + t2;
    }
    h[0] += a;
    h[1] += b;
    h[2] += c;
    h[3] += d;
    h[4] += e;
    h[5] += f;
    h[6] += g;
    h[7] += hh;
  }

  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (std::uint32_t v : h)
    for (int i = 7; i >= 0; --i) out.push_back(hex[(v >> (i * 4)) & 0xf]);
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic ustar archives
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string path;    // archive-relative, '/' separators
  std::string digest;  // sha256 of the content only
  std::uint64_t size = 0;
  bool executable = false;

  bool operator==(const ManifestEntry&) const = default;
};

struct SubmissionPackage {
  std::string archive;  // tar bytes; byte-identical for an unchanged tree
  std::vector<ManifestEntry> manifest;
};

namespace tardetail {

inline void put_octal(char* field, std::size_t len, std::uint64_t value) {
  // len-1 digits, NUL terminated.
  for (std::size_t i = 0; i < len; ++i) field[i] = '0';
  field[len - 1] = '\0';
  std::size_t pos = len - 2;
  while (value > 0 && pos != static_cast<std::size_t>(-1)) {
    field[pos--] = static_cast<char>('0' + (value & 7));
    value >>= 3;
  }
}

// Fixed uid/gid/mtime and normalized modes make repackaging reproducible.
inline std::string tar_header(const std::string& name, std::uint64_t size, bool executable) {
  std::string header(512, '\0');
  char* h = header.data();
  std::string stored = name;
  std::string prefix;
  if (stored.size() > 100) {
    // Split into prefix/name at a '/' boundary.
    const auto cut = stored.rfind('/', std::min<std::size_t>(154, stored.size() - 1));
    if (cut == std::string::npos || cut > 154 || stored.size() - cut - 1 > 100) return {};
    prefix = stored.substr(0, cut);
    stored = stored.substr(cut + 1);
  }
  std::memcpy(h, stored.data(), stored.size());
  std::memcpy(h + 100, executable ? "0000755" : "0000644", 8);
  put_octal(h + 108, 8, 0);   // uid
  put_octal(h + 116, 8, 0);   // gid
  put_octal(h + 124, 12, size);
  put_octal(h + 136, 12, 0);  // mtime
  std::memset(h + 148, ' ', 8);
  h[156] = '0';  // regular file
  std::memcpy(h + 257, "ustar", 6);
  std::memcpy(h + 263, "00", 2);
  std::memcpy(h + 345, prefix.data(), prefix.size());
  unsigned checksum = 0;
  for (int i = 0; i < 512; ++i) checksum += static_cast<unsigned char>(h[i]);
  put_octal(h + 148, 7, checksum);
  h[155] = ' ';
  return header;
}

}  // namespace tardetail

// Packages every regular file under program_dir: paths relative, entries
// sorted lexicographically, fixed timestamps, content-only digests.
inline Result<SubmissionPackage, std::string> package(const std::string& program_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  const fs::path root(program_dir);
  if (!fs::is_directory(root, ec)) return "unreadable-path: " + program_dir;

  std::vector<fs::path> files;
  for (auto it = fs::recursive_directory_iterator(root, ec);
       it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) return "unreadable-path: " + program_dir;
    if (it->is_regular_file(ec)) files.push_back(it->path());
  }
  if (files.empty()) return "empty-directory: nothing to run in " + program_dir;

  std::vector<std::pair<std::string, fs::path>> entries;
  for (const auto& p : files)
    entries.emplace_back(fs::relative(p, root, ec).generic_string(), p);
  std::sort(entries.begin(), entries.end());

  SubmissionPackage pkg;
  for (const auto& [rel, path] : entries) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "unreadable-path: " + path.string();
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto perms = fs::status(path, ec).permissions();
    const bool executable = (perms & fs::perms::owner_exec) != fs::perms::none;
    const std::string header = tardetail::tar_header(rel, content.size(), executable);
    if (header.empty()) return "unsupported path (too long): " + rel;
    pkg.archive += header;
    pkg.archive += content;
    if (content.size() % 512 != 0) pkg.archive.append(512 - content.size() % 512, '\0');
    pkg.manifest.push_back({rel, sha256_hex(content), content.size(), executable});
  }
  pkg.archive.append(1024, '\0');  // end-of-archive marker
  return pkg;
}

inline Result<bool, std::string> extract_archive(const std::string& archive,
                                                 const std::string& dest_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dest_dir, ec);
  std::size_t off = 0;
  while (off + 512 <= archive.size()) {
    const char* h = archive.data() + off;
    if (h[0] == '\0') break;  // end marker
    std::string name(h, strnlen(h, 100));
    const std::string prefix(h + 345, strnlen(h + 345, 155));
    if (!prefix.empty()) name = prefix + "/" + name;
    const std::uint64_t size = std::strtoull(h + 124, nullptr, 8);
    const bool executable = std::strtoul(h + 100, nullptr, 8) & 0100;
    off += 512;
    if (off + size > archive.size()) return std::string("truncated archive");
    if (name.find("..") != std::string::npos) return "unsafe path in archive: " + name;
    const fs::path target = fs::path(dest_dir) / name;
    fs::create_directories(target.parent_path(), ec);
    std::ofstream out(target, std::ios::binary | std::ios::trunc);
    if (!out) return "cannot write " + target.string();
    out.write(archive.data() + off, static_cast<std::streamsize>(size));
    out.close();
    fs::permissions(target,
                    executable ? fs::perms::owner_all | fs::perms::group_read |
                                     fs::perms::group_exec | fs::perms::others_read |
                                     fs::perms::others_exec
                               : fs::perms::owner_read | fs::perms::owner_write |
                                     fs::perms::group_read | fs::perms::others_read,
                    ec);
    off += size;
    if (size % 512 != 0) off += 512 - size % 512;
  }
  return true;
}

}  // namespace client
}  // namespace orch

#endif  // ORCH_CLIENT_PACKAGE_HPP_
