#include "doctest.h"

#include <cmath>
#include <optional>

#include "mecluster/boxcox.hpp"

using namespace mecluster;

TEST_CASE("power transform matches hand values") {
    CHECK(boxcox::transform(4.0, 0.5) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(boxcox::transform(3.0, 2.0) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(boxcox::transform(1.0, 0.37) == doctest::Approx(0.0).epsilon(1e-12));
    // lambda == 1 is the affine shift v - 1, exactly.
    CHECK(boxcox::transform(2.5, 1.0) == 1.5);
    CHECK(boxcox::transform(0.25, 1.0) == -0.75);
}

TEST_CASE("transform rejects nonpositive input") {
    CHECK_THROWS_AS(boxcox::transform(0.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(boxcox::transform(-3.0, 0.5), std::invalid_argument);
}

TEST_CASE("lambda parameter must be positive") {
    CHECK_THROWS_AS(BoxCoxLambda(0.0), std::invalid_argument);
    CHECK_THROWS_AS(BoxCoxLambda(-0.2), std::invalid_argument);
    CHECK(BoxCoxLambda(0.05).value() == 0.05);
}

TEST_CASE("round trip is exact to 1e-9 relative across the working range") {
    for (double expo = -6.0; expo <= 6.0; expo += 0.5) {
        const double v = std::pow(10.0, expo);
        for (double lambda = 0.05; lambda <= 2.0 + 1e-12; lambda += 0.05) {
            // Once v^lambda drops below ~1e-6 the constant term of the
            // transform absorbs the signal and precision is lost by design.
            if (std::pow(v, lambda) < 1e-6) continue;
            const double t = boxcox::transform(v, lambda);
            const double back = boxcox::inverse(t, lambda);
            CHECK(std::abs(back - v) <= 1e-9 * v);
        }
    }
}

TEST_CASE("inverse domain boundary") {
    const double lambda = 0.5;
    CHECK(boxcox::domain_lower_bound(lambda) == -2.0);

    // Exactly at the boundary the base is zero: rejected.
    CHECK_FALSE(boxcox::try_inverse(-2.0, lambda).has_value());
    CHECK_FALSE(boxcox::try_inverse(-2.5, lambda).has_value());
    // Just inside the domain the inverse exists and is tiny but positive.
    const auto near = boxcox::try_inverse(-2.0 + 1e-9, lambda);
    REQUIRE(near.has_value());
    CHECK(*near > 0.0);

    CHECK_THROWS_AS(boxcox::inverse(-2.0, lambda), UntransformableValue);
    try {
        boxcox::inverse(-5.0, 0.25);
        FAIL("expected UntransformableValue");
    } catch (const UntransformableValue& e) {
        CHECK(e.value() == -5.0);
        CHECK(e.lambda() == 0.25);
    }
}

TEST_CASE("identity-lambda inverse never fails") {
    // lambda == 1: base = t + 1 > 0 iff t > -1; below that it still throws,
    // but any t produced by the affine transform round-trips.
    CHECK(boxcox::inverse(boxcox::transform(0.001, 1.0), 1.0) ==
          doctest::Approx(0.001).epsilon(1e-12));
    CHECK(boxcox::try_inverse(-0.999, 1.0).has_value());
    CHECK_FALSE(boxcox::try_inverse(-1.0, 1.0).has_value());
}

TEST_CASE("inverse is monotone in t") {
    const double lambda = 0.3;
    double prev = 0.0;
    for (double t = -3.0; t <= 5.0; t += 0.01) {
        const auto v = boxcox::try_inverse(t, lambda);
        if (!v) {
            CHECK(lambda * t + 1.0 <= 0.0);
            continue;
        }
        CHECK(*v >= prev);
        prev = *v;
    }
}
