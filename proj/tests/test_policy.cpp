#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "duopoly/detect.hpp"
#include "duopoly/errors.hpp"
#include "duopoly/policy.hpp"

using namespace duopoly;

namespace {

const DerivedMarket kBase = derive_market(MarketParams{});

Observation obs_with(std::vector<RoundRecord> window, int round = 5) {
  Observation o;
  o.round = round;
  o.own_cost = 2.0;
  o.window = std::move(window);
  return o;
}

PolicyContext ctx(int firm, std::uint64_t seed = 1) { return PolicyContext{kBase, firm, seed, {}, nullptr}; }

// Minimal two-policy loop: round-0 record at the initial prices, window of 20.
std::array<std::vector<double>, 2> self_play(Policy& a, Policy& b, int rounds, PricePair init = {2.0, 2.0}) {
  std::array<std::vector<RoundRecord>, 2> hist;
  const auto out0 = profit(kBase, init[0], init[1]);
  for (std::size_t f = 0; f < 2; ++f) hist[f].push_back({0, init[f], out0.quantity[f], out0.profit[f], init[1 - f]});
  std::array<std::vector<double>, 2> series;
  for (int r = 1; r <= rounds; ++r) {
    std::array<Observation, 2> obs;
    for (std::size_t f = 0; f < 2; ++f) {
      obs[f].round = r;
      obs[f].firm = static_cast<int>(f);
      obs[f].window = window_view(hist[f], MemoryConfig{});
    }
    const PricePair p{quantize_price(a.decide_price(obs[0])), quantize_price(b.decide_price(obs[1]))};
    const auto out = profit(kBase, p[0], p[1]);
    for (std::size_t f = 0; f < 2; ++f) {
      hist[f].push_back({r, p[f], out.quantity[f], out.profit[f], p[1 - f]});
      series[f].push_back(p[f]);
    }
  }
  return series;
}

}  // namespace

TEST(Constant, AlwaysSamePrice) {
  ConstantPolicy p(7.0);
  EXPECT_EQ(p.decide_price(obs_with({})), 7.0);
  EXPECT_EQ(p.decide_price(obs_with({{1, 3.0, 0, 0, 12.0}})), 7.0);
  EXPECT_FALSE(p.converse(obs_with({}), std::string("hi")));
  EXPECT_FALSE(p.reflect(obs_with({})));
}

TEST(Myopic, BestRespondsToLastRivalPrice) {
  MyopicBestResponsePolicy p(kBase, 0);
  EXPECT_NEAR(p.decide_price(obs_with({{0, 2, 0, 0, 2}, {1, 5, 0, 0, 8.0}})), 6.5, 1e-12);
  EXPECT_NEAR(p.decide_price(obs_with({{0, 2, 0, 0, 2.0}})), 5.0, 1e-12);
}

TEST(Myopic, RejectsPerfectSubstitutes) {
  const auto homog = derive_market(MarketParams{14.0, 1.0 / 300.0, 1.0 / 300.0, 2.0, 2.0});
  PolicyContext c{homog, 0, 1, {}, nullptr};
  try {
    make_policy(PolicySpec{MyopicBestResponseSpec{}, std::nullopt}, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
    EXPECT_EQ(e.cause(), ErrorCode::UnsupportedMode);
  }
}

TEST(Myopic, SelfPlayConvergesToBertrand) {
  MyopicBestResponsePolicy a(kBase, 0), b(kBase, 1);
  const auto s = self_play(a, b, 450);
  for (std::size_t f = 0; f < 2; ++f) {
    EXPECT_NEAR(s[f][49], 6.0, 1e-3);
    const auto c = check_convergence(s[f], {0.1, 0.01, 400});
    ASSERT_TRUE(c);
    EXPECT_NEAR(*c, 6.0, 1e-3);
  }
}

TEST(GrimTrigger, PunishesObservedDefection) {
  GrimTriggerPolicy p(GrimTriggerSpec{8.0, 6.0, 0.2, 20});
  EXPECT_EQ(p.decide_price(obs_with({{0, 2, 0, 0, 2.0}}, 1)), 8.0);
  EXPECT_EQ(p.decide_price(obs_with({{0, 2, 0, 0, 2.0}, {1, 8, 0, 0, 7.0}}, 2)), 6.0);
}

TEST(GrimTrigger, ToleranceAndForgiveness) {
  GrimTriggerPolicy p(GrimTriggerSpec{8.0, 6.0, 0.2, 3});
  std::vector<RoundRecord> w{{1, 8, 0, 0, 7.85}};
  EXPECT_EQ(p.decide_price(obs_with(w, 2)), 8.0);
  w.push_back({2, 8, 0, 0, 7.5});
  EXPECT_EQ(p.decide_price(obs_with(w, 3)), 6.0);
  for (int r = 3; r <= 6; ++r) w.push_back({r, 6, 0, 0, 8.0});
  EXPECT_EQ(p.decide_price(obs_with(w, 4)), 6.0);
  EXPECT_EQ(p.decide_price(obs_with(w, 5)), 6.0);
  EXPECT_EQ(p.decide_price(obs_with(w, 6)), 8.0);
}

TEST(GrimTrigger, SelfPlayHoldsCartel) {
  GrimTriggerPolicy a(GrimTriggerSpec{}), b(GrimTriggerSpec{});
  const auto s = self_play(a, b, 400);
  for (const auto& series : s) {
    for (double p : series) EXPECT_EQ(p, 8.0);
    EXPECT_EQ(check_convergence(series, {0.1, 0.01, 400}), 8.0);
  }
}

TEST(GrimTrigger, AgainstUndercutterKeepsPunishing) {
  GrimTriggerPolicy a(GrimTriggerSpec{8.0, 6.0, 0.2, 20});
  ConstantPolicy b(6.0);
  const auto s = self_play(a, b, 100);
  EXPECT_EQ(s[0][0], 8.0);
  for (std::size_t r = 1; r < s[0].size(); ++r) EXPECT_EQ(s[0][r], 6.0) << "round " << r + 1;
}

TEST(GrimTrigger, StateRoundTrip) {
  GrimTriggerPolicy a(GrimTriggerSpec{8.0, 6.0, 0.2, 5});
  a.decide_price(obs_with({{1, 8, 0, 0, 7.0}}, 2));
  GrimTriggerPolicy b(GrimTriggerSpec{8.0, 6.0, 0.2, 5});
  b.load_state(a.save_state());
  EXPECT_TRUE(b.punishing());
  EXPECT_EQ(b.save_state(), a.save_state());
  auto bad = a.save_state();
  bad["version"] = 99;
  try {
    b.load_state(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::VersionMismatch);
  }
}

TEST(Echo, RepeatsInbound) {
  EchoPolicy e(EchoSpec{"hello", 7.0});
  EXPECT_EQ(e.converse(obs_with({}), std::string("hello")), "hello");
  EXPECT_EQ(e.converse(obs_with({}), std::nullopt), "hello");
  EXPECT_EQ(e.decide_price(obs_with({})), 7.0);
}

TEST(QLearning, DefaultGrid) {
  QLearningPolicy q(QLearningConfig{}, kBase, 0, 1);
  ASSERT_EQ(q.grid().size(), 15u);
  EXPECT_DOUBLE_EQ(q.grid().front(), 5.5);
  EXPECT_DOUBLE_EQ(q.grid().back(), 8.5);
  for (std::size_t i = 1; i < q.grid().size(); ++i) EXPECT_GT(q.grid()[i], q.grid()[i - 1]);
}

TEST(QLearning, SameSeedSameSequence) {
  QLearningPolicy a1(QLearningConfig{}, kBase, 0, 42), b1(QLearningConfig{}, kBase, 1, 43);
  QLearningPolicy a2(QLearningConfig{}, kBase, 0, 42), b2(QLearningConfig{}, kBase, 1, 43);
  EXPECT_EQ(self_play(a1, b1, 300), self_play(a2, b2, 300));
  QLearningPolicy a3(QLearningConfig{}, kBase, 0, 7), b3(QLearningConfig{}, kBase, 1, 43);
  QLearningPolicy a4(QLearningConfig{}, kBase, 0, 42), b4(QLearningConfig{}, kBase, 1, 43);
  EXPECT_NE(self_play(a3, b3, 300)[0], self_play(a4, b4, 300)[0]);
}

TEST(QLearning, ReflectListsGreedyPrices) {
  QLearningPolicy a(QLearningConfig{}, kBase, 0, 1), b(QLearningConfig{}, kBase, 1, 2);
  self_play(a, b, 100);
  const auto text = a.reflect(obs_with({}));
  ASSERT_TRUE(text);
  EXPECT_NE(text->find("5.50 -> "), std::string::npos);
  EXPECT_EQ(std::count(text->begin(), text->end(), '\n'), 15);
}

TEST(QLearning, StateRoundTripContinuesIdentically) {
  QLearningPolicy a(QLearningConfig{}, kBase, 0, 5);
  Observation o = obs_with({{0, 2, 1600, 0, 2}}, 1);
  for (int r = 1; r <= 30; ++r) {
    o.round = r;
    o.window.push_back({r, a.decide_price(o), 700, 3000.0 + r, 6.5 + (r % 4) * 0.5});
  }
  QLearningPolicy b(QLearningConfig{}, kBase, 0, 999);
  b.load_state(a.save_state());
  for (int r = 31; r <= 60; ++r) {
    o.round = r;
    const double pa = a.decide_price(o), pb = b.decide_price(o);
    ASSERT_EQ(pa, pb);
    o.window.push_back({r, pa, 700, 3000.0 + r, 7.0});
  }
}

TEST(QLearning, ValidatesConfig) {
  QLearningConfig c;
  c.learning_rate = 0.0;
  EXPECT_THROW(validate(PolicySpec{c, std::nullopt}), Error);
  c = {};
  c.discount = 1.0;
  EXPECT_THROW(validate(PolicySpec{c, std::nullopt}), Error);
  c = {};
  c.grid = {7.0, 6.0};
  EXPECT_THROW(validate(PolicySpec{c, std::nullopt}), Error);
  EXPECT_THROW(validate(PolicySpec{GrimTriggerSpec{6.0, 8.0, 0.2, 20}, std::nullopt}), Error);
  EXPECT_THROW(validate(PolicySpec{GrimTriggerSpec{8.0, 6.0, 0.0, 20}, std::nullopt}), Error);
}

TEST(QLearning, SelfPlayStaysNearCompetitiveToCartelBand) {
  const auto pb = bertrand_prices(kBase), pm = cartel_prices(kBase);
  int inside = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    QLearningPolicy a(QLearningConfig{}, kBase, 0, seed * 2), b(QLearningConfig{}, kBase, 1, seed * 2 + 1);
    const auto s = self_play(a, b, 2000);
    double mean = 0.0;
    for (std::size_t f = 0; f < 2; ++f) mean += std::accumulate(s[f].end() - 500, s[f].end(), 0.0) / 500.0;
    mean /= 2.0;
    if (mean >= pb[0] - 0.25 && mean <= pm[0] + 0.25) ++inside;
  }
  EXPECT_GE(inside, 8);
}

TEST(Factory, BuildsEachKind) {
  EXPECT_EQ(make_policy(PolicySpec{ConstantSpec{7.0}, std::nullopt}, ctx(0))->name(), "constant");
  EXPECT_EQ(make_policy(PolicySpec{MyopicBestResponseSpec{}, std::nullopt}, ctx(0))->name(), "myopic");
  EXPECT_EQ(make_policy(PolicySpec{GrimTriggerSpec{}, std::nullopt}, ctx(1))->name(), "grim_trigger");
  EXPECT_EQ(make_policy(PolicySpec{QLearningConfig{}, std::nullopt}, ctx(1))->name(), "qlearning");
  EXPECT_EQ(make_policy(PolicySpec{EchoSpec{}, std::nullopt}, ctx(1))->name(), "echo");
  EXPECT_THROW(make_policy(PolicySpec{LlmSpec{}, std::nullopt}, ctx(0)), Error);
}
