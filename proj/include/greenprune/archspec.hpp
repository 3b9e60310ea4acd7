#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace greenprune {

enum class LayerKind { Conv, Linear, Relu, MaxPool, AvgPool, Flatten, ResidualAdd };

std::string_view to_string(LayerKind kind);
std::optional<LayerKind> layer_kind_from_string(std::string_view name);

/// One layer of a sequential network.
///
/// For conv/linear layers `c_in`/`c_out` are declared. For the other kinds
/// they are zero until `infer_shapes` fills them with the channel counts
/// flowing through the layer (flatten reports C*H*W as its `c_out`).
/// `kernel` is the conv kernel side, or the pooling window.
struct LayerSpec {
  int id = 0;
  LayerKind kind = LayerKind::Relu;
  std::int64_t c_in = 0;
  std::int64_t c_out = 0;
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  bool prunable = false;

  // Populated by infer_shapes.
  std::optional<std::int64_t> s_out;
  int out_h = 0;
  int out_w = 0;

  bool is_parametric() const { return kind == LayerKind::Conv || kind == LayerKind::Linear; }

  bool operator==(const LayerSpec&) const = default;
};

struct SkipEdge {
  int from = 0;  // layer whose output is added
  int to = 0;    // residual-add layer
  bool operator==(const SkipEdge&) const = default;
};

struct InputShape {
  int channels = 0;
  int height = 0;
  int width = 0;
  bool operator==(const InputShape&) const = default;
};

struct NetworkArch {
  InputShape input;
  std::vector<LayerSpec> layers;
  std::vector<SkipEdge> skip_edges;

  bool shapes_inferred() const;
  const LayerSpec& layer(int id) const;
  LayerSpec& layer(int id);

  bool operator==(const NetworkArch&) const = default;
};

/// Filters removed per layer, indexed against the layer's c_out in the
/// architecture the mask is applied to.
struct PruneMask {
  std::map<int, std::set<std::int64_t>> removed;
  std::int64_t min_filters = 1;

  bool empty() const;
  std::int64_t total_removed() const;
};

/// Parses the line-oriented architecture format:
///
///     input 3x32x32
///     conv in=3 out=16 k=3 stride=1 pad=1 prunable=true
///     relu
///     skip from=1 to=5
///
/// Layer ids are assigned in declaration order starting at 0. `#` starts a
/// comment. Throws ParseError with the offending line.
NetworkArch parse_arch(std::string_view text);

/// JSON mirror of the text format (see README for the schema).
NetworkArch parse_arch_json(std::string_view text);

/// Loads a file, choosing the JSON parser when the extension is `.json`.
NetworkArch load_arch(const std::filesystem::path& path);

/// Text form that parse_arch reads back. Inferred fields are not written.
std::string serialize_arch(const NetworkArch& arch);
std::string serialize_arch_json(const NetworkArch& arch);

/// Field-level and topology checks, then full shape/channel validation.
void validate(const NetworkArch& arch);

/// Forward shape propagation. Fills s_out, out_h, out_w and the channel
/// counts of non-parametric layers. Throws ConfigError on channel
/// mismatches or a non-positive spatial size. Idempotent.
NetworkArch infer_shapes(const NetworkArch& arch);

/// Parameters of a layer including bias; zero for non-parametric kinds.
std::int64_t param_count(const LayerSpec& layer);

/// Removes filters from prunable conv layers and shrinks the consuming
/// layer's input accordingly. Output is shape-inferred.
NetworkArch apply_mask(const NetworkArch& arch, const PruneMask& mask);

/// Id of the next conv/linear layer after `id`, if any.
std::optional<int> consumer_of(const NetworkArch& arch, int id);

/// Conv layers whose output reaches a residual-add junction, either along
/// the main path or through a skip edge.
std::set<int> junction_feeders(const NetworkArch& arch);

/// Ids of layers marked prunable.
std::vector<int> prunable_layers(const NetworkArch& arch);

/// Sum of c_out over prunable layers.
std::int64_t prunable_filter_count(const NetworkArch& arch);

/// Built-in toy architectures: "vgg-tiny" and "res-tiny".
NetworkArch reference_arch(std::string_view name);
std::string reference_arch_text(std::string_view name);

/// Resolves `name_or_path` to a reference architecture name or a file.
NetworkArch resolve_arch(const std::string& name_or_path);

}  // namespace greenprune
