#include <gtest/gtest.h>

#include <chrono>
#include <numeric>

#include "nsatp/error.hpp"
#include "nsatp/oracle.hpp"
#include "nsatp/parallel.hpp"
#include "support.hpp"

using namespace nsatp;
using namespace nsatp::test;
using namespace std::chrono_literals;

namespace {

std::string stub(const std::string& args) { return std::string(NSATP_STUB_ORACLE) + " " + args; }

ErrorCode predict_error(Oracle& oracle, const ImageShape& shape = {2, 2, 1}) {
  try {
    oracle.predict(std::vector<double>(shape.size(), 0.5), shape);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "prediction succeeded";
  return ErrorCode::Config;
}

std::string row(ExampleId id, const std::vector<double>& p) {
  std::string s = std::to_string(id);
  for (double v : p) s += "," + std::to_string(v);
  return s + "\n";
}

}  // namespace

TEST(TableOracle, ReadsRowsWithOrWithoutHeader) {
  TempDir dir;
  write_text(dir / "t.csv", "example_id,p0,p1,p2,p3,p4,p5,p6,p7,p8,p9\n" + row(0, kConfidentA) +
                                row(5, kConfidentB));
  TableOracle t(dir / "t.csv");
  EXPECT_EQ(t.ids(), (std::vector<ExampleId>{0, 5}));
  const auto& a = t.predict_id(0);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_DOUBLE_EQ(a[i], kConfidentA[i]);

  write_text(dir / "plain.csv", "0,0,0,0,0.18,0.81,0,0,0,0.01,0\n");
  TableOracle plain(dir / "plain.csv");
  EXPECT_DOUBLE_EQ(plain.predict_id(0)[4], 0.81);
}

TEST(TableOracle, Errors) {
  TempDir dir;
  write_text(dir / "t.csv", row(0, {0.5, 0.5}));
  TableOracle t(dir / "t.csv");
  try {
    t.predict_id(3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingId);
  }
  EXPECT_EQ(predict_error(t), ErrorCode::Unsupported);

  write_text(dir / "bad.csv", row(0, {0.5, 0.4}));
  try {
    TableOracle bad(dir / "bad.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidVector);
  }
  write_text(dir / "dup.csv", row(1, {0.5, 0.5}) + row(1, {0.5, 0.5}));
  EXPECT_THROW(TableOracle(dir / "dup.csv"), Error);
}

TEST(TableOracle, AnswersExamplesById) {
  TempDir dir;
  write_text(dir / "t.csv", row(0, {0.9, 0.1}) + row(1, {0.2, 0.8}));
  const auto factory = make_oracle_factory({OracleKind::Table, {}, dir / "t.csv"});
  auto oracle = factory();
  const ImageShape shape{2, 2, 1};
  const auto p = oracle->predict_example(blank_example(shape, 0, 0.0, 1), shape);
  EXPECT_DOUBLE_EQ(p[1], 0.8);
}

TEST(BuiltinOracle, ForwardsToModel) {
  auto w = std::make_shared<const ModelWeights>(init_weights({{4, 3, 2}}, 3));
  BuiltinOracle o(w);
  const std::vector<double> x{0.1, 0.2, 0.3, 0.4};
  const auto p = o.predict(x, {2, 2, 1});
  EXPECT_EQ(p[0], predict(*w, x)[0]);
  EXPECT_EQ(predict_error(o, {3, 3, 1}), ErrorCode::ShapeMismatch);
}

TEST(ExternalOracle, UniformStub) {
  ExternalOracle o(stub("uniform 10"));
  for (int i = 0; i < 5; ++i) {
    const auto p = o.predict(std::vector<double>(784, 0.25), {28, 28, 1});
    ASSERT_EQ(p.size(), 10u);
    for (double v : p.values()) EXPECT_DOUBLE_EQ(v, 0.1);
  }
  EXPECT_EQ(o.requests_sent(), 5);
}

TEST(ExternalOracle, PixelsArriveIntact) {
  ExternalOracle o(stub("mean"));
  const auto p = o.predict(std::vector<double>{0.0, 1.0, 0.25, 0.75, 0.125, 0.875}, {1, 3, 2});
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  const auto q = o.predict(std::vector<double>{0.2, 0.2, 0.2, 0.2}, {2, 2, 1});
  EXPECT_NEAR(q[0], 0.2, 1e-15);
}

TEST(ExternalOracle, IdsStartAtZeroAndIncrease) {
  TempDir dir;
  {
    ExternalOracle o(stub("log " + (dir / "ids.txt").string()));
    for (int i = 0; i < 4; ++i) o.predict(std::vector<double>(4, 0.0), {2, 2, 1});
  }
  EXPECT_EQ(read_text(dir / "ids.txt"), "0\n1\n2\n3\n");
}

TEST(ExternalOracle, MismatchedIdIsProtocolViolation) {
  ExternalOracle o(stub("bad-id"));
  EXPECT_EQ(predict_error(o), ErrorCode::ProtocolViolation);
  EXPECT_EQ(predict_error(o), ErrorCode::ProtocolViolation);
}

TEST(ExternalOracle, MalformedResponseIsProtocolViolation) {
  ExternalOracle o(stub("bad-json"));
  EXPECT_EQ(predict_error(o), ErrorCode::ProtocolViolation);
}

TEST(ExternalOracle, InvalidVector) {
  ExternalOracle o(stub("invalid"));
  EXPECT_EQ(predict_error(o), ErrorCode::InvalidVector);
}

TEST(ExternalOracle, RecoversAfterErrorLine) {
  ExternalOracle o(stub("error-at 1"));
  const ImageShape shape{2, 2, 1};
  const std::vector<double> px(4, 0.5);
  EXPECT_NO_THROW(o.predict(px, shape));
  EXPECT_EQ(predict_error(o), ErrorCode::ProtocolViolation);
  const auto p = o.predict(px, shape);
  EXPECT_DOUBLE_EQ(p[3], 0.1);
  EXPECT_EQ(o.requests_sent(), 3);
}

TEST(ExternalOracle, Timeout) {
  ExternalOracle o(stub("sleep 2000"), 100ms);
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_EQ(predict_error(o), ErrorCode::Timeout);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 1500ms);
}

TEST(ExternalOracle, ChildThatNeverAnswers) {
  ExternalOracle quits(stub("exit"));
  EXPECT_EQ(predict_error(quits), ErrorCode::ProcessSpawnFailure);
  ExternalOracle missing("/nonexistent/oracle-binary");
  EXPECT_EQ(predict_error(missing), ErrorCode::ProcessSpawnFailure);
  EXPECT_THROW(ExternalOracle(""), Error);
}

TEST(ExternalOracle, ChildDyingMidRun) {
  ExternalOracle o(stub("die-after 2"));
  const std::vector<double> px(4, 0.5);
  o.predict(px, {2, 2, 1});
  o.predict(px, {2, 2, 1});
  EXPECT_EQ(predict_error(o), ErrorCode::ProtocolViolation);
}

TEST(ExternalOracle, FactoryStartsOneChildPerCall) {
  OracleSpec spec;
  spec.kind = OracleKind::External;
  spec.command = stub("uniform 3");
  const auto factory = make_oracle_factory(spec);
  auto a = factory();
  auto b = factory();
  a->predict(std::vector<double>(4, 0.0), {2, 2, 1});
  EXPECT_EQ(static_cast<ExternalOracle&>(*a).requests_sent(), 1);
  EXPECT_EQ(static_cast<ExternalOracle&>(*b).requests_sent(), 0);
}

TEST(Parallel, MatchesSerialAndReportsLowestFailure) {
  const auto factory = [] {
    return std::unique_ptr<Oracle>(new FnOracle([](std::span<const double> px) {
      return std::vector<double>{px[0], 1.0 - px[0]};
    }));
  };
  std::vector<double> serial(200), threaded(200);
  auto body = [](std::vector<double>& out) {
    return [&out](std::size_t i, Oracle& o) {
      out[i] = o.predict(std::vector<double>{static_cast<double>(i) / 200.0}, {1, 1, 1})[1];
    };
  };
  parallel_for_each_oracle(200, 1, factory, body(serial));
  parallel_for_each_oracle(200, 8, factory, body(threaded));
  EXPECT_EQ(serial, threaded);

  try {
    parallel_for_each_oracle(100, 4, factory, [](std::size_t i, Oracle&) {
      if (i == 37 || i == 80) throw Error(ErrorCode::MissingId, std::to_string(i));
    });
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("37"), std::string::npos);
  }
}

TEST(OracleKind, Names) {
  EXPECT_EQ(parse_oracle_kind("builtin"), OracleKind::Builtin);
  EXPECT_EQ(parse_oracle_kind("external"), OracleKind::External);
  EXPECT_EQ(to_string(OracleKind::Table), "table");
  EXPECT_THROW(parse_oracle_kind("remote"), Error);
}
