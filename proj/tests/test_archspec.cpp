#include "greenprune/archspec.hpp"
#include "greenprune/error.hpp"

#include <doctest.h>

#include <cstdint>

using namespace greenprune;

namespace {

// Counts parameters by visiting every weight and bias slot.
std::int64_t enumerate_params(const LayerSpec& l) {
  std::int64_t n = 0;
  if (l.kind == LayerKind::Conv) {
    for (std::int64_t o = 0; o < l.c_out; ++o)
      for (std::int64_t i = 0; i < l.c_in; ++i)
        for (int y = 0; y < l.kernel; ++y)
          for (int x = 0; x < l.kernel; ++x) ++n;
    for (std::int64_t o = 0; o < l.c_out; ++o) ++n;
  } else if (l.kind == LayerKind::Linear) {
    for (std::int64_t o = 0; o < l.c_out; ++o)
      for (std::int64_t i = 0; i < l.c_in; ++i) ++n;
    for (std::int64_t o = 0; o < l.c_out; ++o) ++n;
  }
  return n;
}

constexpr const char* kThreeLayer = R"(input 3x8x8
conv in=3 out=16 k=3 stride=1 pad=1
relu
linear in=1024 out=3
)";

constexpr const char* kTwoConv = R"(input 3x32x32
conv in=3 out=16 k=3 stride=1 pad=1 prunable=true
relu
conv in=16 out=8 k=3 stride=1 pad=1 prunable=true
relu
avgpool k=32
flatten
linear in=8 out=3
)";

}  // namespace

TEST_CASE("parse keeps declared fields in order") {
  const auto arch = parse_arch(kThreeLayer);
  REQUIRE(arch.layers.size() == 3);
  CHECK(arch.input == InputShape{3, 8, 8});
  CHECK(arch.layers[0].kind == LayerKind::Conv);
  CHECK(arch.layers[0].c_in == 3);
  CHECK(arch.layers[0].c_out == 16);
  CHECK(arch.layers[0].kernel == 3);
  CHECK(arch.layers[1].kind == LayerKind::Relu);
  CHECK(arch.layers[2].kind == LayerKind::Linear);
  CHECK(arch.layers[2].c_out == 3);
  for (int i = 0; i < 3; ++i) CHECK(arch.layers[i].id == i);
  CHECK_FALSE(arch.layers[0].s_out.has_value());
}

TEST_CASE("parse errors") {
  CHECK_THROWS_WITH_AS(parse_arch(""), doctest::Contains("no layers"), ParseError);
  CHECK_THROWS_WITH_AS(parse_arch("input 3x8x8\n# nothing\n"), doctest::Contains("no layers"), ParseError);
  CHECK_THROWS_AS(validate(parse_arch("input 3x8x8\nconv in=3 out=4 k=0\n")), ConfigError);
  try {
    parse_arch("input 3x8x8\nrelu\nbogus a=1\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(parse_arch("input 3x8x8\nconv in=3 k=3\n"), ParseError);
}

TEST_CASE("text and JSON round trips") {
  const auto arch = reference_arch("res-tiny");
  CHECK(parse_arch(serialize_arch(arch)) == parse_arch(reference_arch_text("res-tiny")));
  CHECK(infer_shapes(parse_arch_json(serialize_arch_json(arch))) == arch);
}

TEST_CASE("shape inference") {
  auto arch = parse_arch("input 3x32x32\nconv in=3 out=16 k=3 stride=1 pad=1\nmaxpool k=2 stride=2\n");
  arch = infer_shapes(arch);
  CHECK(arch.layers[0].s_out == 1024);
  CHECK(arch.layers[1].s_out == 256);
  CHECK(arch.layers[1].c_out == 16);
  CHECK(infer_shapes(arch) == arch);

  CHECK_THROWS_AS(infer_shapes(parse_arch("input 3x4x4\nconv in=3 out=2 k=5 stride=1 pad=0\n")), ConfigError);
  CHECK_THROWS_AS(infer_shapes(parse_arch("input 3x8x8\nconv in=4 out=2 k=3\n")), ConfigError);
}

TEST_CASE("param_count matches per-weight enumeration") {
  LayerSpec conv{.kind = LayerKind::Conv, .c_in = 3, .c_out = 16, .kernel = 3};
  LayerSpec lin{.kind = LayerKind::Linear, .c_in = 10, .c_out = 3};
  LayerSpec relu{.kind = LayerKind::Relu};
  CHECK(param_count(conv) == 448);
  CHECK(param_count(lin) == 33);
  CHECK(param_count(relu) == 0);
  for (const char* name : {"vgg-tiny", "res-tiny"})
    for (const auto& l : reference_arch(name).layers) CHECK(param_count(l) == enumerate_params(l));
}

TEST_CASE("apply_mask propagates channels") {
  const auto arch = infer_shapes(parse_arch(kTwoConv));
  PruneMask mask;
  mask.removed[0] = {0, 3, 7, 15};
  const auto pruned = apply_mask(arch, mask);
  CHECK(pruned.layers[0].c_out == 12);
  CHECK(pruned.layers[2].c_in == 12);
  CHECK(pruned.layers[2].c_out == 8);

  CHECK(apply_mask(arch, PruneMask{}) == arch);

  PruneMask last;
  last.removed[2] = {1, 2};
  const auto shrunk = apply_mask(arch, last);
  CHECK(shrunk.layers[2].c_out == 6);
  CHECK(shrunk.layers[5].c_out == 6);  // flatten width
  CHECK(shrunk.layers[6].c_in == 6);

  PruneMask bad_index;
  bad_index.removed[0] = {16};
  CHECK_THROWS_AS(apply_mask(arch, bad_index), ConfigError);
  PruneMask all;
  for (int f = 0; f < 16; ++f) all.removed[0].insert(f);
  CHECK_THROWS_AS(apply_mask(arch, all), ConfigError);
}

TEST_CASE("residual junction feeders are not prunable") {
  const auto res = reference_arch("res-tiny");
  const auto feeders = junction_feeders(res);
  for (int id : prunable_layers(res)) CHECK(feeders.count(id) == 0);
  for (int id : feeders) {
    PruneMask mask;
    mask.removed[id] = {0};
    CHECK_THROWS_AS(apply_mask(res, mask), ConfigError);
  }

  auto text = reference_arch_text("res-tiny");
  const std::string main_path = "conv in=32 out=32 k=3 stride=1 pad=1\nresidual-add";
  const auto pos = text.find(main_path);
  REQUIRE(pos != std::string::npos);
  text.insert(pos + main_path.find('\n'), " prunable=true");
  CHECK_THROWS_AS(validate(parse_arch(text)), ConfigError);
}

TEST_CASE("reference architectures") {
  const auto vgg = reference_arch("vgg-tiny");
  CHECK(prunable_layers(vgg) == std::vector<int>{0, 3, 6, 8});
  CHECK(prunable_filter_count(vgg) == 112);
  const auto res = reference_arch("res-tiny");
  CHECK(prunable_layers(res) == std::vector<int>{0, 6});
  CHECK(prunable_filter_count(res) == 48);
  CHECK(vgg.shapes_inferred());
  CHECK_THROWS_AS(reference_arch("nope"), ConfigError);
}
