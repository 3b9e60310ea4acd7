#include "greenprune/archspec.hpp"
#include "greenprune/checkpoint.hpp"
#include "greenprune/error.hpp"

#include <doctest.h>

#include <filesystem>

using namespace greenprune;

TEST_CASE("checkpoint round trip") {
  for (const char* name : {"vgg-tiny", "res-tiny"}) {
    Model m = build_from_arch(reference_arch(name), 3, 17);
    m.input_mean = {0.1, 0.2, 0.3};
    m.input_std = {0.5, 0.6, 0.7};
    m.target_mean = {40.0, 20.0, 40.0};
    m.target_std = {9.0, 8.0, 7.5};
    const auto bytes = encode_checkpoint(m);
    CHECK(decode_checkpoint(bytes) == m);

    const auto path = std::filesystem::temp_directory_path() / (std::string("gp_ckpt_") + name + ".ckpt");
    save_checkpoint(m, path);
    CHECK(load_checkpoint(path) == m);
    std::filesystem::remove(path);
  }
}

TEST_CASE("pruned model round trip keeps the pruned arch") {
  PruneMask mask;
  mask.removed[0] = {1, 2, 3};
  const Model m = build_from_arch(apply_mask(reference_arch("vgg-tiny"), mask), 3, 1);
  const Model back = decode_checkpoint(encode_checkpoint(m));
  CHECK(back.arch.layers[0].c_out == m.arch.layers[0].c_out);
  CHECK(back == m);
}

TEST_CASE("corrupt checkpoints are rejected") {
  const Model m = build_from_arch(reference_arch("vgg-tiny"), 3, 1);
  const auto bytes = encode_checkpoint(m);
  CHECK_THROWS_AS(decode_checkpoint("hello"), RuntimeFailure);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, 20)), RuntimeFailure);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 8)), RuntimeFailure);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.ckpt"), RuntimeFailure);
}
