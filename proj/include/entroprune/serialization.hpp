// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0
//
// Named-tensor container shared by checkpoints ("EPCK") and activation dumps
// ("EACT"). All integers and payloads are little-endian.
//
//   char[4]  magic
//   u32      version
//   u32      header length, then that many header bytes
//   u32      tensor count, then per tensor:
//              u32 name length, UTF-8 name, u8 dtype tag (1 = f32, 2 = f64),
//              u32 rank, u64 extents[rank], payload

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "entroprune/tensor.hpp"

namespace entroprune {

class ByteWriter {
 public:
  void u8(std::uint8_t v);
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void bytes(std::span<const std::byte> data);
  void text(std::string_view s);  // u32 length + bytes

  const std::vector<std::byte>& buffer() const { return buffer_; }
  std::vector<std::byte> take() { return std::move(buffer_); }

 private:
  std::vector<std::byte> buffer_;
};

/// Bounds-checked reader; every overrun throws DataError.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> data) : data_(data) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::span<const std::byte> bytes(std::size_t n);
  std::string text();

  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::span<const std::byte> data_;
  std::size_t pos_ = 0;
};

struct RawTensor {
  std::string name;
  DType dtype = DType::kFloat32;
  Shape shape;
  std::vector<std::byte> payload;  // little-endian values

  template <typename T>
  static RawTensor from(std::string name, const Tensor<T>& tensor);
  /// Decodes the payload, converting to T if the stored dtype differs.
  template <typename T>
  Tensor<T> to_tensor() const;
};

struct TensorContainer {
  std::string magic;  // exactly four characters
  std::uint32_t version = 1;
  std::vector<std::byte> header;
  std::vector<RawTensor> tensors;

  const RawTensor& find(std::string_view name) const;
  bool contains(std::string_view name) const;
};

std::vector<std::byte> encode_container(const TensorContainer& container);
/// Throws DataError on a wrong magic, a truncated body or trailing bytes.
TensorContainer decode_container(std::span<const std::byte> bytes, std::string_view expected_magic);

void write_container(const std::filesystem::path& path, const TensorContainer& container);
TensorContainer read_container(const std::filesystem::path& path, std::string_view expected_magic);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes);

}  // namespace entroprune
