// NIfTI, PNG, HDF5 checkpoints and hashing.

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "dasc/checkpoint.hpp"
#include "dasc/error.hpp"
#include "dasc/hashing.hpp"
#include "dasc/image.hpp"
#include "dasc/nifti.hpp"

using namespace dasc;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dasc_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

using Io = TempDir;

TEST_F(Io, NiftiRoundTripPlainAndGz) {
  Volume v{5, 4, 3, {}};
  for (int i = 0; i < 60; ++i) v.data.push_back(-1000.0 + 25.5 * i);
  for (const char* name : {"v.nii", "v.nii.gz"}) {
    write_nifti(dir_ / name, v);
    const Volume r = read_nifti(dir_ / name);
    EXPECT_EQ(r.nx, 5);
    EXPECT_EQ(r.ny, 4);
    EXPECT_EQ(r.nz, 3);
    EXPECT_EQ(r.data, v.data);  // all values are float32-exact
  }
  const auto z1 = v.axial(1);
  ASSERT_EQ(z1.size(), 20u);
  EXPECT_EQ(z1[0], v.data[20]);
  EXPECT_EQ(z1[4 + 5], v.data[20 + 9]);
}

TEST_F(Io, NiftiRejectsGarbage) {
  std::ofstream(dir_ / "bad.nii") << "not a nifti header";
  EXPECT_THROW(read_nifti(dir_ / "bad.nii"), DataError);
  EXPECT_THROW(read_nifti(dir_ / "missing.nii"), DataError);
}

TEST_F(Io, Png16RoundTrip) {
  std::vector<std::uint16_t> px{0, 1, 65535, 32768, 7, 9};
  write_png_gray16(dir_ / "a.png", 2, 3, px);
  const auto g = read_png_gray(dir_ / "a.png");
  EXPECT_EQ(g.bit_depth, 16);
  EXPECT_EQ(g.height, 2);
  EXPECT_EQ(g.width, 3);
  for (std::size_t i = 0; i < px.size(); ++i) EXPECT_EQ(g.values[i], px[i]);
}

TEST_F(Io, NamedArraysKeepOrderAndFlags) {
  std::vector<NamedArray> arrays{{"z.last", Tensor({2, 3}, 1.25), true},
                                 {"a.first", Tensor({4}, std::vector<double>{1e-300, -0.0, 3.5, 1e300}), false}};
  write_named_arrays(dir_ / "p.h5", arrays);
  const auto back = read_named_arrays(dir_ / "p.h5");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].name, "z.last");
  EXPECT_EQ(back[1].name, "a.first");
  EXPECT_EQ(back[1].value, arrays[1].value);
  EXPECT_FALSE(back[1].trainable);
  EXPECT_EQ(back[0].value.shape(), (Shape{2, 3}));
  EXPECT_THROW(read_named_arrays(dir_ / "nope.h5"), DataError);
}

TEST_F(Io, CheckpointRoundTrip) {
  DascModel m(ArchConfig::small(), 3);
  CheckpointManifest man;
  man.stage = "afd-da";
  man.seed = 3;
  man.cycle = 2;
  man.config_hash = "deadbeef";
  save_checkpoint(dir_ / "ck", m.params(), man);
  CheckpointManifest got;
  const auto p = load_checkpoint(dir_ / "ck", &got);
  EXPECT_EQ(p, m.params());
  EXPECT_EQ(got.stage, "afd-da");
  EXPECT_EQ(got.cycle, 2);
  EXPECT_EQ(got.config_hash, "deadbeef");
  EXPECT_EQ(got.roles.size(), 5u);
  EXPECT_THROW(load_checkpoint(dir_ / "absent"), DataError);
}

TEST(Hashing, KnownVector) {
  EXPECT_EQ(sha256_hex(std::string_view("abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}  // namespace
