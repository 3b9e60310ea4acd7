#include "greenprune/checkpoint.hpp"

#include "greenprune/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace greenprune {

namespace {

constexpr std::string_view kMagic = "GPCKPT1\n";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

}  // namespace

std::string encode_checkpoint(const Model& model) {
  nlohmann::ordered_json header;
  header["category_count"] = model.category_count;
  header["arch"] = serialize_arch(model.arch);
  header["input_mean"] = model.input_mean;
  header["input_std"] = model.input_std;
  header["target_mean"] = model.target_mean;
  header["target_std"] = model.target_std;
  header["manifest"] = nlohmann::ordered_json::array();
  std::size_t offset = 0;
  for (const auto& p : model.params) {
    header["manifest"].push_back(
        {{"name", p.name}, {"shape", p.value.shape()}, {"offset", offset}, {"count", p.value.size()}});
    offset += p.value.size();
  }
  const std::string head = header.dump();
  std::string out;
  out += kMagic;
  out += std::to_string(head.size());
  out += '\n';
  out += head;
  const std::size_t data_start = out.size();
  out.resize(data_start + offset * sizeof(double));
  char* dst = out.data() + data_start;
  for (const auto& p : model.params) {
    std::memcpy(dst, p.value.data(), p.value.size() * sizeof(double));
    dst += p.value.size() * sizeof(double);
  }
  return out;
}

Model decode_checkpoint(const std::string& bytes) {
  if (bytes.compare(0, kMagic.size(), kMagic) != 0) throw RuntimeFailure("not a greenprune checkpoint");
  const auto nl = bytes.find('\n', kMagic.size());
  if (nl == std::string::npos) throw RuntimeFailure("truncated checkpoint header");
  std::size_t head_len = 0;
  try {
    head_len = std::stoull(bytes.substr(kMagic.size(), nl - kMagic.size()));
  } catch (const std::exception&) {
    throw RuntimeFailure("corrupt checkpoint header length");
  }
  if (nl + 1 + head_len > bytes.size()) throw RuntimeFailure("truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(nl + 1, head_len));
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeFailure(fmt::format("corrupt checkpoint header: {}", e.what()));
  }
  const std::size_t data_start = nl + 1 + head_len;

  const auto arch = parse_arch(header.at("arch").get<std::string>());
  Model model = build_from_arch(arch, header.at("category_count").get<int>(), 0);
  model.input_mean = header.at("input_mean").get<std::vector<double>>();
  model.input_std = header.at("input_std").get<std::vector<double>>();
  if (model.input_mean.size() != model.input_std.size() ||
      model.input_mean.size() != static_cast<std::size_t>(arch.input.channels))
    throw RuntimeFailure("checkpoint input standardization does not match the architecture's channels");
  model.target_mean = header.at("target_mean").get<std::vector<double>>();
  model.target_std = header.at("target_std").get<std::vector<double>>();
  if (model.target_mean.size() != model.target_std.size() ||
      model.target_mean.size() != static_cast<std::size_t>(model.category_count))
    throw RuntimeFailure("checkpoint output scaling does not match the category count");
  const auto& manifest = header.at("manifest");
  if (manifest.size() != model.params.size())
    throw RuntimeFailure(fmt::format("checkpoint lists {} parameters, architecture needs {}", manifest.size(),
                                     model.params.size()));
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& entry = manifest[i];
    auto& p = model.params[i];
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (name != p.name || shape != p.value.shape())
      throw RuntimeFailure(fmt::format("checkpoint parameter {} ({} {}) does not match architecture ({} {})", i, name,
                                       shape_string(shape), p.name, shape_string(p.value.shape())));
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto count = entry.at("count").get<std::size_t>();
    if (count != p.value.size() || data_start + (offset + count) * sizeof(double) > bytes.size())
      throw RuntimeFailure(fmt::format("checkpoint data for '{}' is out of range", name));
    std::memcpy(p.value.data(), bytes.data() + data_start + offset * sizeof(double), count * sizeof(double));
  }
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure(fmt::format("cannot write checkpoint '{}'", path.string()));
  const auto bytes = encode_checkpoint(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw RuntimeFailure(fmt::format("failed writing checkpoint '{}'", path.string()));
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure(fmt::format("cannot open checkpoint '{}'", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

}  // namespace greenprune
