#include <doctest.h>

#include <vector>

#include "hat/encoders.hpp"
#include "hat/rng.hpp"

using hat::ImageEncoderConfig;
using hat::Mat;
using hat::TextEncoderConfig;

namespace {

TextEncoderConfig small_text() {
  TextEncoderConfig text;
  text.vocab_size = 20;
  text.model_dim = 8;
  text.num_layers = 3;
  text.num_heads = 2;
  text.max_len = 10;
  text.tap_layers = {2, 3};
  return text;
}

ImageEncoderConfig small_image() {
  ImageEncoderConfig image;
  image.grid_side = 8;
  image.patch_dim = 6;
  image.stage_dims = {6, 8, 10};
  image.blocks_per_stage = {1, 1, 1};
  image.tap_stages = {2, 3};
  return image;
}

}  // namespace

TEST_SUITE_BEGIN("encoders");

TEST_CASE("text config defaults are valid and typos are caught") {
  TextEncoderConfig text = small_text();
  CHECK_NOTHROW(text.validate());

  text.tap_layers = {3, 2};  // not increasing
  CHECK_THROWS_AS(text.validate(), hat::ConfigError);
  text.tap_layers = {2, 4};  // beyond num_layers
  CHECK_THROWS_AS(text.validate(), hat::ConfigError);
  text.tap_layers = {2, 3};
  text.model_dim = 9;  // not divisible by heads
  CHECK_THROWS_AS(text.validate(), hat::ConfigError);
  text.model_dim = 8;
  text.vocab_size = 0;
  CHECK_THROWS_AS(text.validate(), hat::ConfigError);
}

TEST_CASE("image config geometry helpers") {
  ImageEncoderConfig image;
  image.grid_side = 16;
  image.patch_dim = 48;
  image.stage_dims = {8, 14, 16, 15};
  image.blocks_per_stage = {1, 1, 1, 1};
  image.tap_stages = {2, 3, 4};
  CHECK_NOTHROW(image.validate());
  CHECK(image.num_stages() == 4);
  CHECK(image.side_at_stage(1) == 16);
  CHECK(image.side_at_stage(2) == 8);
  CHECK(image.side_at_stage(4) == 2);
  CHECK(image.tokens_at_stage(2) == 64);
  CHECK(image.tokens_at_stage(3) == 16);
  CHECK(image.tokens_at_stage(4) == 4);
  CHECK(image.heads_at_stage(1) == 4);   // dim 8
  CHECK(image.heads_at_stage(2) == 2);   // dim 14
  CHECK(image.heads_at_stage(3) == 4);   // dim 16
  CHECK(image.heads_at_stage(4) == 1);   // dim 15
}

TEST_CASE("image config rejects bad geometry") {
  ImageEncoderConfig image = small_image();
  CHECK_NOTHROW(image.validate());

  image.grid_side = 6;  // not divisible by 2^(stages-1)
  CHECK_THROWS_AS(image.validate(), hat::ConfigError);
  image.grid_side = 8;
  image.tap_stages = {1, 2};  // stage 1 output is not a tap
  CHECK_THROWS_AS(image.validate(), hat::ConfigError);
  image.tap_stages = {2, 4};  // beyond num_stages
  CHECK_THROWS_AS(image.validate(), hat::ConfigError);
  image.tap_stages = {2, 3};
  image.blocks_per_stage = {1, 1};  // wrong length
  CHECK_THROWS_AS(image.validate(), hat::ConfigError);
}

TEST_CASE("model rejects mismatched tap counts") {
  TextEncoderConfig text = small_text();
  text.tap_layers = {3};
  CHECK_THROWS_AS(hat::Model(text, small_image(), 7, 1), hat::ConfigError);
}

TEST_CASE("text taps project every level to tokens x align_dim") {
  const hat::Model model(small_text(), small_image(), 7, 5);
  const std::vector<int> tokens{3, 1, 4, 1, 5};
  const hat::LevelledFeatures levels = model.encode_text(tokens);
  REQUIRE(levels.size() == 2);
  for (const Mat& level : levels) {
    CHECK(level.rows() == 5);
    CHECK(level.cols() == 7);
    CHECK(level.all_finite());
  }
}

TEST_CASE("image taps follow the patch-merging pyramid") {
  TextEncoderConfig text = small_text();
  text.tap_layers = {1, 2, 3};
  ImageEncoderConfig image;
  image.grid_side = 16;
  image.patch_dim = 5;
  image.stage_dims = {6, 8, 10, 12};
  image.blocks_per_stage = {1, 1, 1, 1};
  image.tap_stages = {2, 3, 4};
  const hat::Model model(text, image, 7, 9);

  hat::Rng rng(1);
  const Mat grid = rng.normal_mat(16 * 16, 5);
  const hat::LevelledFeatures levels = model.encode_image(grid);
  REQUIRE(levels.size() == 3);
  CHECK(levels[0].rows() == 64);
  CHECK(levels[1].rows() == 16);
  CHECK(levels[2].rows() == 4);
  for (const Mat& level : levels) CHECK(level.cols() == 7);
}

TEST_CASE("token counts are input independent for images, length driven for text") {
  const hat::Model model(small_text(), small_image(), 7, 11);
  hat::Rng rng(2);
  const hat::LevelledFeatures a = model.encode_image(rng.normal_mat(64, 6));
  const hat::LevelledFeatures b = model.encode_image(rng.normal_mat(64, 6));
  CHECK(a[0].rows() == b[0].rows());
  CHECK(a[1].rows() == b[1].rows());

  CHECK(model.encode_text({1, 2})[0].rows() == 2);
  CHECK(model.encode_text({1, 2, 3, 4, 5, 6, 7})[0].rows() == 7);
}

TEST_CASE("recurrent text encoder replicates its final tap per level") {
  TextEncoderConfig text = small_text();
  text.kind = TextEncoderConfig::Kind::Recurrent;
  const hat::Model model(text, small_image(), 7, 13);
  const hat::LevelledFeatures levels = model.encode_text({2, 7, 1});
  REQUIRE(levels.size() == 2);
  // shared trunk output, but each level still has its own projection
  CHECK(levels[0].rows() == 3);
  CHECK(levels[1].rows() == 3);
  CHECK(levels[0].cols() == 7);
  CHECK(levels[0].all_finite());
}

TEST_CASE("same seed builds identical models, different seeds differ") {
  const hat::Model a(small_text(), small_image(), 7, 21);
  const hat::Model b(small_text(), small_image(), 7, 21);
  const hat::Model c(small_text(), small_image(), 7, 22);
  CHECK(a.params().fingerprint() == b.params().fingerprint());
  CHECK(a.params().fingerprint() != c.params().fingerprint());
}

TEST_CASE("frozen encoders are pure functions of their input") {
  const hat::Model model(small_text(), small_image(), 7, 23);
  hat::Rng rng(3);
  const Mat grid = rng.normal_mat(64, 6);
  const hat::LevelledFeatures a = model.encode_image(grid);
  const hat::LevelledFeatures b = model.encode_image(grid);
  for (size_t l = 0; l < a.size(); ++l) CHECK(a[l] == b[l]);

  const std::vector<int> tokens{1, 2, 3};
  const hat::LevelledFeatures ta = model.encode_text(tokens);
  const hat::LevelledFeatures tb = model.encode_text(tokens);
  for (size_t l = 0; l < ta.size(); ++l) CHECK(ta[l] == tb[l]);
}

TEST_CASE("tape path and plain path produce identical features") {
  const hat::Model model(small_text(), small_image(), 7, 25);
  hat::Rng rng(4);
  const Mat grid = rng.normal_mat(64, 6);
  const std::vector<int> tokens{5, 9, 2, 2};

  hat::Tape tape(hat::Tape::Mode::NoGrad);
  hat::Model::Bound bound = model.bind(tape, false, false);
  const std::vector<hat::Var> img = model.encode_image(bound, grid);
  const std::vector<hat::Var> txt = model.encode_text(bound, tokens);

  const hat::LevelledFeatures img_plain = model.encode_image(grid);
  const hat::LevelledFeatures txt_plain = model.encode_text(tokens);
  for (size_t l = 0; l < img_plain.size(); ++l) CHECK(tape.val(img[l]) == img_plain[l]);
  for (size_t l = 0; l < txt_plain.size(); ++l) CHECK(tape.val(txt[l]) == txt_plain[l]);
}

TEST_CASE("encoder input contracts are enforced") {
  const hat::Model model(small_text(), small_image(), 7, 27);
  CHECK_THROWS_AS(model.encode_text({}), hat::InputError);
  CHECK_THROWS_AS(model.encode_text({20}), hat::InputError);   // vocab is [0, 20)
  CHECK_THROWS_AS(model.encode_text({-1}), hat::InputError);
  CHECK_THROWS_AS(model.encode_text(std::vector<int>(11, 1)), hat::InputError);  // max_len 10
  CHECK_THROWS_AS(model.encode_image(Mat(63, 6)), hat::InputError);
  CHECK_THROWS_AS(model.encode_image(Mat(64, 5)), hat::InputError);
}

TEST_SUITE_END();
