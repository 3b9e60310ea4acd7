#include "greenprune/archspec.hpp"

#include "greenprune/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace greenprune {

namespace {

constexpr std::string_view kVggTiny = R"(# Plain 4-conv stack, 32x32 RGB input, 3 regression outputs.
input 3x32x32
conv in=3 out=16 k=3 stride=1 pad=1 prunable=true
relu
maxpool k=2 stride=2
conv in=16 out=32 k=3 stride=1 pad=1 prunable=true
relu
maxpool k=2 stride=2
conv in=32 out=32 k=3 stride=1 pad=1 prunable=true
relu
conv in=32 out=32 k=3 stride=1 pad=1 prunable=true
relu
avgpool k=8 stride=8
flatten
linear in=32 out=3
)";

// Layers 3 and 8 feed the junction at 9 and stay unpruned.
constexpr std::string_view kResTiny = R"(# 4-conv stack with one residual block, 32x32 RGB input, 3 regression outputs.
input 3x32x32
conv in=3 out=16 k=3 stride=1 pad=1 prunable=true
relu
maxpool k=2 stride=2
conv in=16 out=32 k=3 stride=1 pad=1
relu
maxpool k=2 stride=2
conv in=32 out=32 k=3 stride=1 pad=1 prunable=true
relu
conv in=32 out=32 k=3 stride=1 pad=1
residual-add
relu
avgpool k=8 stride=8
flatten
linear in=32 out=3
skip from=5 to=9
)";

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::optional<std::int64_t> to_int(std::string_view s) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Declared fields a layer kind accepts, and which of them are required.
struct KeySchema {
  std::vector<std::string_view> allowed;
  std::vector<std::string_view> required;
};

KeySchema schema_for(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv:
      return {{"in", "out", "k", "stride", "pad", "prunable"}, {"in", "out", "k"}};
    case LayerKind::Linear:
      return {{"in", "out"}, {"in", "out"}};
    case LayerKind::MaxPool:
    case LayerKind::AvgPool:
      return {{"k", "stride", "pad"}, {"k"}};
    default:
      return {{}, {}};
  }
}

// Applies key=value pairs to a layer. `fail` reports errors with context.
template <typename Fail>
void assign_fields(LayerSpec& layer, const std::map<std::string, std::string>& kv, Fail&& fail) {
  const auto schema = schema_for(layer.kind);
  for (const auto& [key, value] : kv) {
    if (std::find(schema.allowed.begin(), schema.allowed.end(), key) == schema.allowed.end())
      fail(fmt::format("unknown field '{}' for {}", key, to_string(layer.kind)));
  }
  for (auto req : schema.required) {
    if (!kv.count(std::string(req)))
      fail(fmt::format("missing required field '{}' for {}", req, to_string(layer.kind)));
  }
  auto get_int = [&](const std::string& key, std::int64_t fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    auto v = to_int(it->second);
    if (!v) fail(fmt::format("field '{}' is not an integer: '{}'", key, it->second));
    return *v;
  };
  layer.c_in = get_int("in", 0);
  layer.c_out = get_int("out", 0);
  layer.kernel = static_cast<int>(get_int("k", 0));
  layer.stride = static_cast<int>(get_int("stride", layer.kind == LayerKind::Conv ? 1 : layer.kernel));
  layer.pad = static_cast<int>(get_int("pad", 0));
  if (auto it = kv.find("prunable"); it != kv.end()) {
    if (it->second == "true" || it->second == "1") {
      layer.prunable = true;
    } else if (it->second == "false" || it->second == "0") {
      layer.prunable = false;
    } else {
      fail(fmt::format("field 'prunable' must be true or false, got '{}'", it->second));
    }
  }
}

// Field-level invariants that do not need shape propagation.
void check_fields(const NetworkArch& arch) {
  if (arch.layers.empty()) throw ConfigError("no layers");
  if (arch.input.channels < 1 || arch.input.height < 1 || arch.input.width < 1)
    throw ConfigError("input shape must be positive");
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& l = arch.layers[i];
    const auto where = fmt::format("layer {} ({})", l.id, to_string(l.kind));
    if (l.id != static_cast<int>(i)) throw ConfigError(where + ": ids must be ordinal");
    if (l.is_parametric() && (l.c_in < 1 || l.c_out < 1))
      throw ConfigError(where + ": in and out must be >= 1");
    if (l.kind == LayerKind::Conv || l.kind == LayerKind::MaxPool || l.kind == LayerKind::AvgPool) {
      if (l.kernel < 1) throw ConfigError(where + ": kernel size must be >= 1");
      if (l.stride < 1) throw ConfigError(where + ": stride must be >= 1");
      if (l.pad < 0) throw ConfigError(where + ": pad must be >= 0");
    }
    if (l.prunable && l.kind != LayerKind::Conv)
      throw ConfigError(where + ": only conv layers can be prunable");
  }
  std::map<int, int> skips_into;
  for (const auto& e : arch.skip_edges) {
    const int n = static_cast<int>(arch.layers.size());
    if (e.from < 0 || e.from >= n || e.to < 0 || e.to >= n)
      throw ConfigError(fmt::format("skip {}->{} references a nonexistent layer", e.from, e.to));
    if (arch.layers[e.to].kind != LayerKind::ResidualAdd)
      throw ConfigError(fmt::format("skip {}->{} must end at a residual-add layer", e.from, e.to));
    if (e.from >= e.to - 1)
      throw ConfigError(fmt::format("skip {}->{} must start before the add's main input", e.from, e.to));
    ++skips_into[e.to];
  }
  for (const auto& l : arch.layers) {
    if (l.kind == LayerKind::ResidualAdd && skips_into[l.id] != 1)
      throw ConfigError(fmt::format("residual-add {} needs exactly one skip edge", l.id));
  }
  const auto feeders = junction_feeders(arch);
  for (int id : feeders) {
    if (arch.layers[id].prunable)
      throw ConfigError(fmt::format("conv {} feeds a residual-add and cannot be prunable", id));
  }
}

// Nearest layer at or before `index` that sets the channel count.
std::optional<int> producer_of(const NetworkArch& arch, int index) {
  for (int i = index; i >= 0; --i) {
    const auto kind = arch.layers[i].kind;
    if (kind == LayerKind::Conv || kind == LayerKind::Linear || kind == LayerKind::ResidualAdd) return i;
  }
  return std::nullopt;
}

std::int64_t pooled_extent(std::int64_t in, int kernel, int stride, int pad) {
  if (in + 2 * pad < kernel) return 0;
  return (in + 2 * pad - kernel) / stride + 1;
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Linear: return "linear";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::ResidualAdd: return "residual-add";
  }
  return "?";
}

std::optional<LayerKind> layer_kind_from_string(std::string_view name) {
  for (auto k : {LayerKind::Conv, LayerKind::Linear, LayerKind::Relu, LayerKind::MaxPool,
                 LayerKind::AvgPool, LayerKind::Flatten, LayerKind::ResidualAdd}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

bool NetworkArch::shapes_inferred() const {
  return !layers.empty() &&
         std::all_of(layers.begin(), layers.end(), [](const LayerSpec& l) { return l.s_out.has_value(); });
}

const LayerSpec& NetworkArch::layer(int id) const {
  if (id < 0 || id >= static_cast<int>(layers.size()))
    throw ConfigError(fmt::format("layer {} does not exist", id));
  return layers[id];
}

LayerSpec& NetworkArch::layer(int id) {
  return const_cast<LayerSpec&>(std::as_const(*this).layer(id));
}

bool PruneMask::empty() const {
  return std::all_of(removed.begin(), removed.end(), [](const auto& kv) { return kv.second.empty(); });
}

std::int64_t PruneMask::total_removed() const {
  std::int64_t n = 0;
  for (const auto& [id, set] : removed) n += static_cast<std::int64_t>(set.size());
  return n;
}

NetworkArch parse_arch(std::string_view text) {
  NetworkArch arch;
  bool have_input = false;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const auto line = trim(raw);
    if (line.empty()) continue;

    auto fail = [&](const std::string& msg) { throw ParseError(line_no, msg); };
    const auto tokens = split_ws(line);
    const auto head = tokens.front();

    if (head == "input") {
      if (tokens.size() != 2) fail("expected 'input CxHxW'");
      std::vector<std::int64_t> dims;
      std::string_view spec = tokens[1];
      std::size_t p = 0;
      while (p <= spec.size()) {
        const auto x = spec.find('x', p);
        auto part = spec.substr(p, x == std::string_view::npos ? std::string_view::npos : x - p);
        auto v = to_int(part);
        if (!v) fail(fmt::format("bad input shape '{}'", spec));
        dims.push_back(*v);
        p = x == std::string_view::npos ? spec.size() + 1 : x + 1;
      }
      if (dims.size() != 3) fail(fmt::format("input shape needs three dimensions, got '{}'", spec));
      arch.input = {static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2])};
      have_input = true;
      continue;
    }

    std::map<std::string, std::string> kv;
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      const auto eq = tokens[i].find('=');
      if (eq == std::string_view::npos || eq == 0) fail(fmt::format("expected key=value, got '{}'", tokens[i]));
      auto [it, inserted] = kv.emplace(std::string(tokens[i].substr(0, eq)), std::string(tokens[i].substr(eq + 1)));
      if (!inserted) fail(fmt::format("duplicate field '{}'", it->first));
    }

    if (head == "skip") {
      if (!kv.count("from") || !kv.count("to") || kv.size() != 2) fail("expected 'skip from=<id> to=<id>'");
      auto from = to_int(kv["from"]);
      auto to = to_int(kv["to"]);
      if (!from || !to) fail("skip ids must be integers");
      arch.skip_edges.push_back({static_cast<int>(*from), static_cast<int>(*to)});
      continue;
    }

    auto kind = layer_kind_from_string(head);
    if (!kind) fail(fmt::format("unknown layer kind '{}'", head));
    LayerSpec layer;
    layer.id = static_cast<int>(arch.layers.size());
    layer.kind = *kind;
    assign_fields(layer, kv, fail);
    arch.layers.push_back(layer);
  }
  if (arch.layers.empty()) throw ParseError(line_no, "no layers");
  if (!have_input) throw ParseError(line_no, "missing 'input CxHxW' line");
  check_fields(arch);
  return arch;
}

NetworkArch parse_arch_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("invalid JSON architecture: {}", e.what()));
  }
  NetworkArch arch;
  try {
    const auto& input = doc.at("input");
    if (!input.is_array() || input.size() != 3) throw ConfigError("'input' must be [C, H, W]");
    arch.input = {input[0].get<int>(), input[1].get<int>(), input[2].get<int>()};
    for (const auto& entry : doc.at("layers")) {
      const auto kind_name = entry.at("kind").get<std::string>();
      auto kind = layer_kind_from_string(kind_name);
      const int index = static_cast<int>(arch.layers.size());
      auto fail = [&](const std::string& msg) { throw ConfigError(fmt::format("layer {}: {}", index, msg)); };
      if (!kind) fail(fmt::format("unknown layer kind '{}'", kind_name));
      std::map<std::string, std::string> kv;
      for (const auto& [key, value] : entry.items()) {
        if (key == "kind") continue;
        if (value.is_boolean()) kv[key] = value.get<bool>() ? "true" : "false";
        else if (value.is_number_integer()) kv[key] = std::to_string(value.get<std::int64_t>());
        else fail(fmt::format("field '{}' has an unsupported type", key));
      }
      LayerSpec layer;
      layer.id = index;
      layer.kind = *kind;
      assign_fields(layer, kv, fail);
      arch.layers.push_back(layer);
    }
    if (doc.contains("skips")) {
      for (const auto& e : doc.at("skips")) arch.skip_edges.push_back({e.at("from").get<int>(), e.at("to").get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed JSON architecture: {}", e.what()));
  }
  check_fields(arch);
  return arch;
}

NetworkArch load_arch(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open architecture file '{}'", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  if (path.extension() == ".json") return parse_arch_json(buf.str());
  return parse_arch(buf.str());
}

std::string serialize_arch(const NetworkArch& arch) {
  std::string out = fmt::format("input {}x{}x{}\n", arch.input.channels, arch.input.height, arch.input.width);
  for (const auto& l : arch.layers) {
    out += to_string(l.kind);
    switch (l.kind) {
      case LayerKind::Conv:
        out += fmt::format(" in={} out={} k={} stride={} pad={}", l.c_in, l.c_out, l.kernel, l.stride, l.pad);
        if (l.prunable) out += " prunable=true";
        break;
      case LayerKind::Linear:
        out += fmt::format(" in={} out={}", l.c_in, l.c_out);
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool:
        out += fmt::format(" k={} stride={}", l.kernel, l.stride);
        if (l.pad != 0) out += fmt::format(" pad={}", l.pad);
        break;
      default:
        break;
    }
    out += '\n';
  }
  for (const auto& e : arch.skip_edges) out += fmt::format("skip from={} to={}\n", e.from, e.to);
  return out;
}

std::string serialize_arch_json(const NetworkArch& arch) {
  nlohmann::ordered_json doc;
  doc["input"] = {arch.input.channels, arch.input.height, arch.input.width};
  doc["layers"] = nlohmann::ordered_json::array();
  for (const auto& l : arch.layers) {
    nlohmann::ordered_json e;
    e["kind"] = std::string(to_string(l.kind));
    if (l.is_parametric()) {
      e["in"] = l.c_in;
      e["out"] = l.c_out;
    }
    if (l.kind == LayerKind::Conv || l.kind == LayerKind::MaxPool || l.kind == LayerKind::AvgPool) {
      e["k"] = l.kernel;
      e["stride"] = l.stride;
      e["pad"] = l.pad;
    }
    if (l.kind == LayerKind::Conv) e["prunable"] = l.prunable;
    doc["layers"].push_back(e);
  }
  doc["skips"] = nlohmann::ordered_json::array();
  for (const auto& s : arch.skip_edges) doc["skips"].push_back({{"from", s.from}, {"to", s.to}});
  return doc.dump(2) + "\n";
}

std::set<int> junction_feeders(const NetworkArch& arch) {
  std::set<int> out;
  auto mark = [&](int index) {
    if (auto p = producer_of(arch, index); p && arch.layers[*p].kind == LayerKind::Conv) out.insert(*p);
  };
  for (const auto& e : arch.skip_edges) {
    if (e.to < 1 || e.to >= static_cast<int>(arch.layers.size())) continue;
    mark(e.to - 1);
    mark(e.from);
  }
  return out;
}

void validate(const NetworkArch& arch) {
  check_fields(arch);
  (void)infer_shapes(arch);
}

NetworkArch infer_shapes(const NetworkArch& in) {
  check_fields(in);
  NetworkArch arch = in;
  struct State {
    std::int64_t c, h, w;
  };
  State cur{arch.input.channels, arch.input.height, arch.input.width};
  std::vector<State> outputs;
  outputs.reserve(arch.layers.size());

  for (auto& l : arch.layers) {
    const auto where = fmt::format("layer {} ({})", l.id, to_string(l.kind));
    switch (l.kind) {
      case LayerKind::Conv: {
        if (l.c_in != cur.c)
          throw ConfigError(fmt::format("{}: in={} but the incoming tensor has {} channels", where, l.c_in, cur.c));
        const auto h = pooled_extent(cur.h, l.kernel, l.stride, l.pad);
        const auto w = pooled_extent(cur.w, l.kernel, l.stride, l.pad);
        if (h < 1 || w < 1) throw ConfigError(fmt::format("{}: output spatial size {}x{} is not positive", where, h, w));
        cur = {l.c_out, h, w};
        break;
      }
      case LayerKind::Linear:
        if (cur.h != 1 || cur.w != 1)
          throw ConfigError(fmt::format("{}: input is spatial ({}x{}); flatten first", where, cur.h, cur.w));
        if (l.c_in != cur.c)
          throw ConfigError(fmt::format("{}: in={} but the incoming vector has {} features", where, l.c_in, cur.c));
        cur = {l.c_out, 1, 1};
        break;
      case LayerKind::Relu:
        l.c_in = l.c_out = cur.c;
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool: {
        const auto h = pooled_extent(cur.h, l.kernel, l.stride, l.pad);
        const auto w = pooled_extent(cur.w, l.kernel, l.stride, l.pad);
        if (h < 1 || w < 1) throw ConfigError(fmt::format("{}: output spatial size {}x{} is not positive", where, h, w));
        l.c_in = l.c_out = cur.c;
        cur = {cur.c, h, w};
        break;
      }
      case LayerKind::Flatten:
        l.c_in = cur.c;
        cur = {cur.c * cur.h * cur.w, 1, 1};
        l.c_out = cur.c;
        break;
      case LayerKind::ResidualAdd: {
        const auto edge = std::find_if(arch.skip_edges.begin(), arch.skip_edges.end(),
                                       [&](const SkipEdge& e) { return e.to == l.id; });
        const auto& src = outputs.at(edge->from);
        if (src.c != cur.c || src.h != cur.h || src.w != cur.w)
          throw ConfigError(fmt::format("{}: skip from {} has shape {}x{}x{} but main path has {}x{}x{}", where,
                                        edge->from, src.c, src.h, src.w, cur.c, cur.h, cur.w));
        l.c_in = l.c_out = cur.c;
        break;
      }
    }
    l.out_h = static_cast<int>(cur.h);
    l.out_w = static_cast<int>(cur.w);
    l.s_out = cur.h * cur.w;
    outputs.push_back(cur);
  }
  return arch;
}

std::int64_t param_count(const LayerSpec& layer) {
  switch (layer.kind) {
    case LayerKind::Conv:
      return layer.c_in * layer.kernel * layer.kernel * layer.c_out + layer.c_out;
    case LayerKind::Linear:
      return layer.c_in * layer.c_out + layer.c_out;
    default:
      return 0;
  }
}

std::optional<int> consumer_of(const NetworkArch& arch, int id) {
  for (int i = id + 1; i < static_cast<int>(arch.layers.size()); ++i) {
    if (arch.layers[i].is_parametric()) return i;
  }
  return std::nullopt;
}

NetworkArch apply_mask(const NetworkArch& in, const PruneMask& mask) {
  if (mask.min_filters < 1) throw ConfigError("min_filters must be >= 1");
  const NetworkArch base = in.shapes_inferred() ? in : infer_shapes(in);
  NetworkArch out = base;
  for (const auto& [id, filters] : mask.removed) {
    if (filters.empty()) continue;
    const auto& layer = base.layer(id);
    if (!layer.prunable)
      throw ConfigError(fmt::format("layer {} ({}) is not prunable", id, to_string(layer.kind)));
    for (auto f : filters) {
      if (f < 0 || f >= layer.c_out)
        throw ConfigError(fmt::format("layer {} has no filter {} (c_out={})", id, f, layer.c_out));
    }
    const auto remaining = layer.c_out - static_cast<std::int64_t>(filters.size());
    if (remaining < mask.min_filters)
      throw ConfigError(fmt::format("layer {}: removing {} of {} filters leaves fewer than {}", id, filters.size(),
                                    layer.c_out, mask.min_filters));
    out.layer(id).c_out = remaining;
    if (auto consumer = consumer_of(base, id)) {
      const auto& before = base.layer(*consumer);
      // A linear consumer behind a flatten sees c_out * H * W features.
      const auto per_channel = before.c_in / layer.c_out;
      out.layer(*consumer).c_in = remaining * per_channel;
    }
  }
  for (auto& l : out.layers) {
    l.s_out.reset();
    l.out_h = l.out_w = 0;
    if (!l.is_parametric()) l.c_in = l.c_out = 0;
  }
  return infer_shapes(out);
}

std::vector<int> prunable_layers(const NetworkArch& arch) {
  std::vector<int> ids;
  for (const auto& l : arch.layers)
    if (l.prunable) ids.push_back(l.id);
  return ids;
}

std::int64_t prunable_filter_count(const NetworkArch& arch) {
  std::int64_t n = 0;
  for (const auto& l : arch.layers)
    if (l.prunable) n += l.c_out;
  return n;
}

std::string reference_arch_text(std::string_view name) {
  if (name == "vgg-tiny") return std::string(kVggTiny);
  if (name == "res-tiny") return std::string(kResTiny);
  throw ConfigError(fmt::format("unknown reference architecture '{}'", name));
}

NetworkArch reference_arch(std::string_view name) { return infer_shapes(parse_arch(reference_arch_text(name))); }

NetworkArch resolve_arch(const std::string& name_or_path) {
  if (name_or_path == "vgg-tiny" || name_or_path == "res-tiny") return reference_arch(name_or_path);
  return infer_shapes(load_arch(name_or_path));
}

}  // namespace greenprune
