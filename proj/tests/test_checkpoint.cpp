#include "trajkit/checkpoint.hpp"

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "trajkit/errors.hpp"
#include "trajkit/masking.hpp"
#include "trajkit/model.hpp"

using namespace trajkit;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.d = 8;
  c.enc_blocks = 2;
  c.dec_blocks = 1;
  c.heads = 2;
  c.pad_len = 16;
  c.ffn_mult = 2;
  c.lr = 3e-4;
  c.batch = 7;
  c.epochs = 23;
  c.patience = 4;
  c.val_fraction = 0.25;
  c.icr_dts = {1, 4};
  c.seed = 99;
  return c;
}

// Distinct from any fresh initialization, so loading must actually copy.
ModelState perturbed_state() {
  ModelState st = init_model(tiny_config());
  st.w_s(0, 0) += 0.123;
  st.h_mask(0, 3) = -7.5;
  st.enc[1].w1(2, 5) = 42.0;
  st.dec[0].b2(0, 1) = 1e-12;
  return st;
}

std::string saved(const ModelState& st, std::size_t epoch) {
  std::ostringstream out;
  save_checkpoint(st, epoch, out);
  return out.str();
}

}  // namespace

TEST(Checkpoint, RoundTripIsExact) {
  ModelState st = perturbed_state();
  std::istringstream in(saved(st, 17));
  Checkpoint ck = load_checkpoint(in);
  EXPECT_EQ(ck.epoch, 17u);

  auto pa = named_params(static_cast<const ModelState&>(st));
  auto pb = named_params(static_cast<const ModelState&>(ck.state));
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t p = 0; p < pa.size(); ++p) {
    EXPECT_EQ(pa[p].first, pb[p].first);
    EXPECT_EQ(*pa[p].second, *pb[p].second) << pa[p].first;
  }

  const ModelConfig& c = ck.state.cfg;
  EXPECT_EQ(c.d, 8u);
  EXPECT_EQ(c.enc_blocks, 2u);
  EXPECT_EQ(c.dec_blocks, 1u);
  EXPECT_EQ(c.heads, 2u);
  EXPECT_EQ(c.pad_len, 16u);
  EXPECT_EQ(c.ffn_mult, 2u);
  EXPECT_EQ(c.lr, 3e-4);
  EXPECT_EQ(c.batch, 7u);
  EXPECT_EQ(c.epochs, 23u);
  EXPECT_EQ(c.patience, 4u);
  EXPECT_EQ(c.val_fraction, 0.25);
  EXPECT_EQ(c.icr_dts, (std::vector<std::size_t>{1, 4}));
  EXPECT_EQ(c.seed, 99u);
}

TEST(Checkpoint, LoadedStatePredictsIdentically) {
  ModelState st = perturbed_state();
  Trajectory t;
  t.id = "probe";
  for (std::size_t i = 0; i < 10; ++i)
    t.points.push_back({{116.30 + 1e-3 * static_cast<double>(i),
                         39.90 + 5e-4 * static_cast<double>(i % 3)},
                        static_cast<double>(i)});
  MaskedTrajectory m = mask_random(t, 0.5, 8);

  std::istringstream in(saved(st, 0));
  Checkpoint ck = load_checkpoint(in);
  EXPECT_EQ(forward_offsets(m, st), forward_offsets(m, ck.state));
}

TEST(Checkpoint, SerializationIsByteStable) {
  ModelState st = perturbed_state();
  const std::string once = saved(st, 3);
  const std::string twice = saved(st, 3);
  EXPECT_EQ(once, twice);

  std::istringstream in(once);
  Checkpoint ck = load_checkpoint(in);
  EXPECT_EQ(saved(ck.state, 3), once);  // save(load(x)) == x
}

TEST(Checkpoint, RejectsUnknownFormat) {
  ModelState st = init_model(tiny_config());
  nlohmann::json j = nlohmann::json::parse(saved(st, 0));
  j["format"] = "something-else";
  std::istringstream in(j.dump());
  EXPECT_THROW(load_checkpoint(in), Error);
  std::istringstream garbage("not json at all {");
  EXPECT_THROW(load_checkpoint(garbage), Error);
}

TEST(Checkpoint, RejectsMissingParameter) {
  ModelState st = init_model(tiny_config());
  nlohmann::json j = nlohmann::json::parse(saved(st, 0));
  j["params"].erase("enc0.wq");
  std::istringstream in(j.dump());
  EXPECT_THROW(load_checkpoint(in), Error);
}

TEST(Checkpoint, RejectsSizeMismatch) {
  ModelState st = init_model(tiny_config());
  nlohmann::json j = nlohmann::json::parse(saved(st, 0));
  auto& arr = j["params"]["w_out"];
  arr.erase(arr.size() - 1);
  std::istringstream in(j.dump());
  EXPECT_THROW(load_checkpoint(in), Error);
}

TEST(Checkpoint, RejectsBrokenConfig) {
  ModelState st = init_model(tiny_config());
  nlohmann::json j = nlohmann::json::parse(saved(st, 0));
  j["config"].erase("heads");
  {
    std::istringstream in(j.dump());
    EXPECT_THROW(load_checkpoint(in), Error);
  }
  j = nlohmann::json::parse(saved(st, 0));
  j["config"]["heads"] = 3;  // 8 % 6 != 0: config fails validation
  {
    std::istringstream in(j.dump());
    EXPECT_THROW(load_checkpoint(in), Error);
  }
}
