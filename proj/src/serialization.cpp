// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0

#include "entroprune/serialization.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace entroprune {

static_assert(std::endian::native == std::endian::little, "serialisation assumes a little-endian host");

namespace {

template <typename V>
void append_raw(std::vector<std::byte>& out, V value) {
  const auto* p = reinterpret_cast<const std::byte*>(&value);
  out.insert(out.end(), p, p + sizeof(V));
}

constexpr std::uint32_t kMaxRank = 16;

}  // namespace

void ByteWriter::u8(std::uint8_t v) { append_raw(buffer_, v); }
void ByteWriter::u16(std::uint16_t v) { append_raw(buffer_, v); }
void ByteWriter::u32(std::uint32_t v) { append_raw(buffer_, v); }
void ByteWriter::u64(std::uint64_t v) { append_raw(buffer_, v); }
void ByteWriter::f32(float v) { append_raw(buffer_, v); }
void ByteWriter::f64(double v) { append_raw(buffer_, v); }

void ByteWriter::bytes(std::span<const std::byte> data) { buffer_.insert(buffer_.end(), data.begin(), data.end()); }

void ByteWriter::text(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(std::as_bytes(std::span(s.data(), s.size())));
}

std::span<const std::byte> ByteReader::bytes(std::size_t n) {
  if (n > remaining()) {
    throw DataError("truncated file: needed " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                    ", " + std::to_string(remaining()) + " left");
  }
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

namespace {

template <typename V>
V read_raw(ByteReader& r) {
  V v;
  std::memcpy(&v, r.bytes(sizeof(V)).data(), sizeof(V));
  return v;
}

}  // namespace

std::uint8_t ByteReader::u8() { return read_raw<std::uint8_t>(*this); }
std::uint16_t ByteReader::u16() { return read_raw<std::uint16_t>(*this); }
std::uint32_t ByteReader::u32() { return read_raw<std::uint32_t>(*this); }
std::uint64_t ByteReader::u64() { return read_raw<std::uint64_t>(*this); }
float ByteReader::f32() { return read_raw<float>(*this); }
double ByteReader::f64() { return read_raw<double>(*this); }

std::string ByteReader::text() {
  const auto n = u32();
  auto b = bytes(n);
  return std::string(reinterpret_cast<const char*>(b.data()), b.size());
}

template <typename T>
RawTensor RawTensor::from(std::string name, const Tensor<T>& tensor) {
  RawTensor raw;
  raw.name = std::move(name);
  raw.dtype = dtype_of<T>();
  raw.shape = tensor.shape();
  const auto bytes = std::as_bytes(tensor.data());
  raw.payload.assign(bytes.begin(), bytes.end());
  return raw;
}

template <typename T>
Tensor<T> RawTensor::to_tensor() const {
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  if (payload.size() != n * dtype_size(dtype)) throw DataError("tensor '" + name + "' payload size mismatch");
  std::vector<T> values(n);
  if (dtype == DType::kFloat32) {
    for (std::size_t i = 0; i < n; ++i) {
      float v;
      std::memcpy(&v, payload.data() + i * 4, 4);
      values[i] = static_cast<T>(v);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      double v;
      std::memcpy(&v, payload.data() + i * 8, 8);
      values[i] = static_cast<T>(v);
    }
  }
  return Tensor<T>(shape, std::move(values));
}

template RawTensor RawTensor::from(std::string, const Tensor<float>&);
template RawTensor RawTensor::from(std::string, const Tensor<double>&);
template Tensor<float> RawTensor::to_tensor() const;
template Tensor<double> RawTensor::to_tensor() const;

const RawTensor& TensorContainer::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw DataError("missing tensor '" + std::string(name) + "'");
}

bool TensorContainer::contains(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

std::vector<std::byte> encode_container(const TensorContainer& c) {
  if (c.magic.size() != 4) throw std::invalid_argument("container magic must be four characters");
  ByteWriter w;
  w.bytes(std::as_bytes(std::span(c.magic.data(), 4)));
  w.u32(c.version);
  w.u32(static_cast<std::uint32_t>(c.header.size()));
  w.bytes(c.header);
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    w.text(t.name);
    w.u8(static_cast<std::uint8_t>(t.dtype));
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto e : t.shape) w.u64(static_cast<std::uint64_t>(e));
    w.bytes(t.payload);
  }
  return w.take();
}

TensorContainer decode_container(std::span<const std::byte> bytes, std::string_view expected_magic) {
  ByteReader r(bytes);
  TensorContainer c;
  if (bytes.size() < 4) throw DataError("file too short for a container header");
  auto m = r.bytes(4);
  c.magic.assign(reinterpret_cast<const char*>(m.data()), 4);
  if (c.magic != expected_magic) {
    throw DataError("format error: expected magic '" + std::string(expected_magic) + "', found '" + c.magic + "'");
  }
  c.version = r.u32();
  const auto header_len = r.u32();
  auto h = r.bytes(header_len);
  c.header.assign(h.begin(), h.end());
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    RawTensor t;
    t.name = r.text();
    const auto tag = r.u8();
    if (tag != static_cast<std::uint8_t>(DType::kFloat32) && tag != static_cast<std::uint8_t>(DType::kFloat64)) {
      throw DataError("tensor '" + t.name + "' has unknown dtype tag " + std::to_string(tag));
    }
    t.dtype = static_cast<DType>(tag);
    const auto rank = r.u32();
    if (rank > kMaxRank) throw DataError("tensor '" + t.name + "' has implausible rank");
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto e = r.u64();
      if (e > (1ULL << 40)) throw DataError("tensor '" + t.name + "' has implausible extent");
      t.shape.push_back(static_cast<std::int64_t>(e));
      n *= e;
    }
    auto p = r.bytes(static_cast<std::size_t>(n * dtype_size(t.dtype)));
    t.payload.assign(p.begin(), p.end());
    c.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw DataError("corrupt file: " + std::to_string(r.remaining()) + " trailing bytes");
  return c;
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> out(size);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(size));
  if (!in) throw DataError("failed reading " + path.string());
  return out;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

void write_container(const std::filesystem::path& path, const TensorContainer& container) {
  write_file_bytes(path, encode_container(container));
}

TensorContainer read_container(const std::filesystem::path& path, std::string_view expected_magic) {
  return decode_container(read_file_bytes(path), expected_magic);
}

}  // namespace entroprune
