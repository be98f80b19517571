// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mmfs/checkpoint.hpp"
#include "mmfs/errors.hpp"
#include "mmfs/model.hpp"
#include "support.hpp"

using namespace mmfs;
using namespace mmfs::testing;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("mmfs_test_" + name);
}

}  // namespace

TEST_CASE("checkpoints round-trip bit-exactly") {
  MmfsModel a(tiny_model(), 1), b(tiny_model(), 2);
  const Checkpoint ck = snapshot(a.store(), "base", 0xabcdef);
  const auto path = temp_file("roundtrip.ckpt");
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  std::filesystem::remove(path);
  CHECK(back.stage == "base");
  CHECK(back.config_hash == 0xabcdef);
  restore(b.store(), back);
  for (size_t i = 0; i < a.store().params().size(); ++i) {
    CHECK(a.store().params()[i]->value == b.store().params()[i]->value);
  }
  CHECK(encode_checkpoint(snapshot(b.store(), "base", 0xabcdef)) == encode_checkpoint(ck));
}

TEST_CASE("corrupt checkpoints are reported") {
  MmfsModel a(tiny_model(), 1);
  const std::string bytes = encode_checkpoint(snapshot(a.store(), "meta", 1));
  CHECK_THROWS_WITH_AS(decode_checkpoint("nonsense"), doctest::Contains("magic"), DataError);
  CHECK_THROWS_WITH_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), doctest::Contains("truncated"),
                       DataError);
  CHECK_THROWS_WITH_AS(decode_checkpoint(bytes + "x"), doctest::Contains("trailing"), DataError);
  CHECK_THROWS_AS(load_checkpoint(temp_file("absent.ckpt")), DataError);
}

TEST_CASE("restoring into a different architecture names the parameter") {
  MmfsModel a(tiny_model(), 1);
  ModelConfig other = tiny_model();
  other.num_queries = 6;
  MmfsModel b(other, 1);
  CHECK_THROWS_AS(restore(b.store(), snapshot(a.store(), "base", 0)), DataError);

  Checkpoint partial = snapshot(a.store(), "base", 0);
  const std::string dropped = partial.tensors.back().name;
  partial.tensors.pop_back();
  CHECK_THROWS_WITH_AS(restore(a.store(), partial), doctest::Contains(dropped.c_str()), DataError);
}
