#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace fdmlab::tensorio {

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;  // row-major, size == product of shape
};

struct TensorFile {
  std::string kind;
  std::map<std::string, std::string> meta;  // seed, config digest, ...
  std::vector<Tensor> tensors;
};

// "FDMT" magic, u32 version, u32 header length, JSON header, then the
// tensor payloads as contiguous little-endian doubles.
std::string serialize_tensors(const TensorFile& f);
TensorFile parse_tensors(const std::string& bytes);

const Tensor& find_tensor(const TensorFile& f, const std::string& name);

}  // namespace fdmlab::tensorio
