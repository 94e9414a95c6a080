#include <doctest.h>

#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace pxd;

TEST_SUITE("gradcheck") {
  TEST_CASE("every stage passes at the default size across seeds") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      const GradcheckReport r = run_gradcheck({4, 3, seed, false});
      CHECK(r.pass);
      REQUIRE(r.stages.size() == 6);
      for (const auto& s : r.stages) CHECK_MESSAGE(s.pass, s.name << " " << s.error);
    }
  }

  TEST_CASE("stage names and thresholds") {
    const GradcheckReport r = run_gradcheck({});
    const std::vector<std::pair<std::string, double>> expect{{"generator.softmax", 1e-6}, {"generator.gumbel", 1e-6},
                                                             {"augment.vjp", 1e-6},       {"augment.adjoint", 1e-9},
                                                             {"fft", 1e-5},               {"pipeline", 1e-4}};
    REQUIRE(r.stages.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
      CHECK(r.stages[i].name == expect[i].first);
      CHECK(r.stages[i].threshold == expect[i].second);
    }
  }

  TEST_CASE("other sizes and palette sizes") {
    for (auto [size, n] : {std::pair{2, 2}, std::pair{6, 5}, std::pair{8, 3}}) CHECK(run_gradcheck({size, n, 1, false}).pass);
  }

  TEST_CASE("an injected sign error fails the pipeline stage only") {
    const GradcheckReport r = run_gradcheck({4, 3, 0, true});
    CHECK_FALSE(r.pass);
    for (const auto& s : r.stages) CHECK(s.pass == (s.name != "pipeline"));
  }

  TEST_CASE("argument checks") {
    CHECK_PXD_ERROR(run_gradcheck({4, 1, 0, false}), Errc::config, "at least 2 elements, got 1");
    CHECK_PXD_ERROR(run_gradcheck({9, 3, 0, false}), Errc::config, "");
    CHECK_PXD_ERROR(run_gradcheck({1, 3, 0, false}), Errc::config, "");
  }

  TEST_CASE("relative error metric") {
    CHECK(max_relative_error({1.0, 2.0}, {1.0, 2.0}, 1e-4) == 0.0);
    CHECK(max_relative_error({1.1}, {1.0}, 1e-4) == doctest::Approx(0.1 / 1.1));
    // Tiny entries are compared against the floor, not their own size.
    CHECK(max_relative_error({1.0, 1e-9}, {1.0, 2e-9}, 1e-4) == doctest::Approx(1e-9 / 1e-4));
  }
}
