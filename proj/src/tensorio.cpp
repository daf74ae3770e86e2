#include "fdmlab/tensorio.hpp"

#include <cstring>

#include "fdmlab/errors.hpp"
#include "json.hpp"

namespace fdmlab::tensorio {

namespace {

constexpr char kMagic[4] = {'F', 'D', 'M', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.append(b, 4);
}

std::uint32_t get_u32(const std::string& s, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + i]))
         << (8 * i);
  return v;
}

std::size_t element_count(const Tensor& t) {
  std::size_t n = 1;
  for (std::size_t d : t.shape) n *= d;
  return n;
}

}  // namespace

std::string serialize_tensors(const TensorFile& f) {
  nlohmann::ordered_json header;
  header["kind"] = f.kind;
  header["meta"] = f.meta;
  auto tensors = nlohmann::ordered_json::array();
  std::size_t offset = 0;
  for (const auto& t : f.tensors) {
    if (t.data.size() != element_count(t))
      throw ArgError("serialize_tensors: tensor '" + t.name +
                     "' data does not match its shape");
    nlohmann::ordered_json tj;
    tj["name"] = t.name;
    tj["shape"] = t.shape;
    tj["offset"] = offset;
    tj["count"] = t.data.size();
    tensors.push_back(tj);
    offset += t.data.size();
  }
  header["tensors"] = tensors;
  const std::string hs = header.dump();

  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(hs.size()));
  out += hs;
  // Host is little-endian in this tooling's supported environments; doubles
  // go out verbatim.
  for (const auto& t : f.tensors) {
    const std::size_t bytes = t.data.size() * sizeof(double);
    const std::size_t at = out.size();
    out.resize(at + bytes);
    std::memcpy(out.data() + at, t.data.data(), bytes);
  }
  return out;
}

TensorFile parse_tensors(const std::string& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw DataError("tensor file: bad magic");
  if (get_u32(bytes, 4) != kVersion)
    throw DataError("tensor file: unsupported version");
  const std::size_t hlen = get_u32(bytes, 8);
  if (12 + hlen > bytes.size())
    throw DataError("tensor file: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(12, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("tensor file: invalid header JSON: ") +
                    e.what());
  }

  TensorFile f;
  try {
    f.kind = header.at("kind").get<std::string>();
    if (header.contains("meta"))
      f.meta = header["meta"].get<std::map<std::string, std::string>>();
    const std::size_t base = 12 + hlen;
    for (const auto& tj : header.at("tensors")) {
      Tensor t;
      t.name = tj.at("name").get<std::string>();
      t.shape = tj.at("shape").get<std::vector<std::size_t>>();
      const auto offset = tj.at("offset").get<std::size_t>();
      const auto count = tj.at("count").get<std::size_t>();
      if (count != element_count(t))
        throw DataError("tensor file: '" + t.name + "' count/shape mismatch");
      const std::size_t start = base + offset * sizeof(double);
      const std::size_t len = count * sizeof(double);
      if (start + len > bytes.size())
        throw DataError("tensor file: truncated payload for '" + t.name + "'");
      t.data.resize(count);
      std::memcpy(t.data.data(), bytes.data() + start, len);
      f.tensors.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("tensor file: malformed header: ") + e.what());
  }
  return f;
}

const Tensor& find_tensor(const TensorFile& f, const std::string& name) {
  for (const auto& t : f.tensors)
    if (t.name == name) return t;
  throw DataError("tensor file: missing tensor '" + name + "'");
}

}  // namespace fdmlab::tensorio
