#include "buildiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "buildiff/error.hpp"

namespace buildiff {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw InputError("checkpoint " + path.string() + ": truncated");
  return v;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot write checkpoint " + path.string());
  os.write("BDIF", 4);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > 0xffff) throw std::invalid_argument("checkpoint entry name too long");
    put<std::uint16_t>(os, static_cast<std::uint16_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<std::uint8_t>(os, static_cast<std::uint8_t>(e.tensor.rank()));
    for (auto d : e.tensor.shape()) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(e.tensor.data().data()),
             static_cast<std::streamsize>(e.tensor.size() * sizeof(double)));
  }
  if (!os) throw InputError("failed writing checkpoint " + path.string());
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "BDIF", 4) != 0)
    throw InputError("checkpoint " + path.string() + ": bad magic");
  const auto version = get<std::uint32_t>(is, path);
  if (version != kCheckpointVersion)
    throw InputError("checkpoint " + path.string() + ": unsupported version " +
                     std::to_string(version));
  const auto count = get<std::uint32_t>(is, path);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint16_t>(is, path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw InputError("checkpoint " + path.string() + ": truncated");
    const auto rank = get<std::uint8_t>(is, path);
    ad::Shape shape(rank);
    for (auto& d : shape) d = get<std::uint32_t>(is, path);
    std::vector<double> data(ad::numel(shape));
    if (!is.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * sizeof(double))))
      throw InputError("checkpoint " + path.string() + ": truncated data for '" + name + "'");
    out.push_back({std::move(name), ad::Tensor(std::move(shape), std::move(data))});
  }
  return out;
}

std::vector<NamedTensor> snapshot(const ad::ParameterSet& params) {
  std::vector<NamedTensor> out;
  for (const auto* p : params.all()) out.push_back({p->name, p->value});
  return out;
}

void restore(ad::ParameterSet& params, const std::vector<NamedTensor>& entries) {
  std::unordered_map<std::string, const ad::Tensor*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e.tensor;
  for (auto* p : params.all()) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw InputError("checkpoint lacks parameter '" + p->name + "'");
    if (it->second->shape() != p->value.shape())
      throw InputError("checkpoint parameter '" + p->name + "' has shape " +
                       ad::shape_str(it->second->shape()) + ", expected " +
                       ad::shape_str(p->value.shape()));
    p->value = *it->second;
  }
}

}  // namespace buildiff
