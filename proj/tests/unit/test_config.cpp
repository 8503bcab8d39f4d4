#include <gtest/gtest.h>

#include "invdec/error.hpp"
#include "invdec/kv_config.hpp"
#include "invdec/run_config.hpp"
#include "test_util.hpp"

namespace config = invdec::config;

TEST(KvConfig, SectionsCommentsAndWhitespace) {
  auto kv = config::KvConfig::parse(
      "top = 1\n"
      "# comment\n"
      "; also a comment\n"
      "[model]\n"
      "  d_model =  32  \n"
      "\n"
      "[train]\n"
      "lr=1e-3\n");
  EXPECT_EQ(kv.get("top"), "1");
  EXPECT_EQ(kv.get("model.d_model"), "32");
  EXPECT_EQ(kv.get("train.lr"), "1e-3");
  EXPECT_FALSE(kv.get("model.lr").has_value());
  EXPECT_EQ(kv.keys().size(), 3u);
}

TEST(KvConfig, MalformedInput) {
  EXPECT_THROW(config::KvConfig::parse("[model\n"), invdec::ParseError);
  EXPECT_THROW(config::KvConfig::parse("[]\n"), invdec::ParseError);
  EXPECT_THROW(config::KvConfig::parse("novalue\n"), invdec::ParseError);
  EXPECT_THROW(config::KvConfig::parse("= 3\n"), invdec::ParseError);
  EXPECT_THROW(config::KvConfig::parse("[a]\nx=1\nx=2\n"), invdec::ParseError);
  try {
    config::KvConfig::parse("a=1\nbroken\n", "run.ini");
    FAIL();
  } catch (const invdec::ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("run.ini"), std::string::npos) << msg;
    EXPECT_NE(msg.find("2"), std::string::npos) << msg;
  }
}

TEST(KvConfig, Overrides) {
  config::KvConfig kv;
  kv.apply_override("model.heads=2");
  kv.apply_override(" train.lr = 0.01 ");
  EXPECT_EQ(kv.get("model.heads"), "2");
  EXPECT_EQ(kv.get("train.lr"), "0.01");
  kv.apply_override("model.heads=8");
  EXPECT_EQ(kv.get("model.heads"), "8");
  EXPECT_THROW(kv.apply_override("model.heads"), invdec::UsageError);
  EXPECT_THROW(kv.apply_override("=3"), invdec::UsageError);
  EXPECT_TRUE(kv.erase("model.heads"));
  EXPECT_FALSE(kv.erase("model.heads"));
}

TEST(KvConfig, CanonicalTextRoundTrip) {
  config::KvConfig kv;
  kv.set("z.b", "2");
  kv.set("a.c", "x y");
  kv.set("plain", "p");
  kv.set("z.a", "1");
  const std::string text = kv.to_text();
  EXPECT_LT(text.find("plain"), text.find("[a]"));
  EXPECT_LT(text.find("[a]"), text.find("[z]"));
  EXPECT_LT(text.find("a = 1"), text.find("b = 2"));
  EXPECT_EQ(config::KvConfig::parse(text).entries(), kv.entries());
  testutil::TempDir dir;
  kv.save(dir / "c.ini");
  EXPECT_EQ(config::KvConfig::load(dir / "c.ini").entries(), kv.entries());
  EXPECT_THROW(config::KvConfig::load(dir / "absent.ini"), invdec::IoError);
}

TEST(RunConfig, DefaultsFollowProtocol) {
  config::RunConfig c;
  EXPECT_EQ(c.model.lookback, 96u);
  EXPECT_EQ(c.model.dec_layers, 2u);
  EXPECT_EQ(c.model.heads, 4u);
  EXPECT_EQ(c.train.adam.lr, 1e-3);
  const std::vector<std::size_t> horizons{96, 192, 336, 720};
  EXPECT_EQ(c.ablation.horizons, horizons);
  EXPECT_NE(std::find(horizons.begin(), horizons.end(), c.model.horizon), horizons.end());
  EXPECT_EQ(c.ablation.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(c.data.split.train_frac, 0.70);
}

TEST(RunConfig, KvRoundTripIsLossless) {
  testutil::for_all(41, 20, [](std::mt19937_64& rng, int) {
    config::RunConfig c;
    c.model = testutil::random_config(rng);
    c.variates_auto = rng() % 2 == 0;
    c.lambda_auto = rng() % 2 == 0;
    c.model.lambda_mode = rng() % 2 ? invdec::model::LambdaMode::kFixed
                                    : invdec::model::LambdaMode::kLearnable;
    c.train.adam.lr = std::uniform_real_distribution<double>(1e-5, 1e-1)(rng);
    c.seed = rng() % 1000;
    c.train.seed = c.seed;
    c.synth.coupling = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    c.ablation.values = {0.1, 1.0 / 3.0};
    c.data.path = "data/x y.csv";
    auto back = config::RunConfig::from_kv(config::KvConfig::parse(c.to_text()));
    EXPECT_EQ(back.to_text(), c.to_text());
    EXPECT_EQ(back.fingerprint(), c.fingerprint());
    EXPECT_TRUE(config::diff(back, c).empty());
  });
}

TEST(RunConfig, UnknownKeyNamed) {
  config::KvConfig kv;
  kv.set("model.dmodel", "8");
  try {
    config::RunConfig::from_kv(kv);
    FAIL();
  } catch (const invdec::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.dmodel"), std::string::npos);
  }
}

TEST(RunConfig, BadValuesNameTheField) {
  for (const char* bad : {"model.d_model=abc", "train.lr=fast", "model.lambda_mode=maybe",
                          "train.shuffle=perhaps", "data.source=sql", "model.encoder_scope=all",
                          "train.batch_size=0", "run.threads=0", "data.train_frac=0.9"}) {
    config::KvConfig kv;
    kv.apply_override(bad);
    const std::string key = std::string(bad).substr(0, std::string(bad).find('='));
    try {
      config::RunConfig::from_kv(kv);
      ADD_FAILURE() << bad;
    } catch (const invdec::ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(key.substr(key.find('.') + 1)), std::string::npos)
          << bad << ": " << e.what();
    }
  }
}

TEST(RunConfig, ResolveVariatesAndLambda) {
  config::RunConfig c;
  c.resolve(7);
  EXPECT_EQ(c.model.variates, 7u);
  EXPECT_EQ(c.model.lambda, 0.3);
  EXPECT_TRUE(c.resolved());

  config::RunConfig big;
  big.resolve(321);
  EXPECT_EQ(big.model.lambda, 1.0);

  config::RunConfig gap;
  EXPECT_THROW(gap.resolve(50), invdec::ConfigError);

  config::RunConfig fixed;
  fixed.variates_auto = false;
  fixed.model.variates = 7;
  EXPECT_THROW(fixed.resolve(21), invdec::ConfigError);
}

TEST(RunConfig, AutoLambdaBoundaries) {
  EXPECT_EQ(config::auto_lambda(1), 0.3);
  EXPECT_EQ(config::auto_lambda(21), 0.3);
  EXPECT_THROW(config::auto_lambda(22), invdec::ConfigError);
  EXPECT_THROW(config::auto_lambda(99), invdec::ConfigError);
  EXPECT_EQ(config::auto_lambda(100), 1.0);
}

TEST(RunConfig, FingerprintIgnoresOutputLocation) {
  config::RunConfig a;
  config::RunConfig b = a;
  b.out = "elsewhere";
  b.threads = 4;
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  EXPECT_EQ(a.fingerprint().size(), 16u);
  b.model.d_model = 32;
  EXPECT_NE(a.fingerprint(), b.fingerprint());
  EXPECT_EQ(config::diff(a, b), (std::vector<std::string>{"model.d_model", "run.out", "run.threads"}));
}

TEST(RunConfig, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1e-3, 1.0 / 3.0, 123456789.125, 0.0}) {
    EXPECT_EQ(std::stod(config::format_double(v)), v);
  }
  EXPECT_EQ(config::format_double(0.3), "0.3");
}
