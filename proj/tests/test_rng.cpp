#include <doctest.h>

#include <set>

#include "gradmix/rng.hpp"

using namespace gradmix;

TEST_CASE("same seed gives identical streams") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("forks are independent of consumption order") {
    Rng root(7);
    Rng a1 = root.fork("alpha");
    root.fork("beta").uniform();  // consuming a sibling stream
    Rng a2 = root.fork("alpha");
    for (int i = 0; i < 20; ++i) CHECK(a1.next_u64() == a2.next_u64());
}

TEST_CASE("named forks differ from each other") {
    Rng root(7);
    CHECK(root.fork("alpha").next_u64() != root.fork("beta").next_u64());
    CHECK(root.fork("alpha", 0).next_u64() != root.fork("alpha", 1).next_u64());
    CHECK(root.fork("alpha", 1, 0).next_u64() != root.fork("alpha", 1, 1).next_u64());
}

TEST_CASE("uniform stays in [0,1) and covers the range") {
    Rng r(3);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 10000; ++i) {
        double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);
}

TEST_CASE("uniform_int is bounded and hits every residue") {
    Rng r(11);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 1000; ++i) seen.insert(r.uniform_int(7));
    CHECK(seen.size() == 7);
    CHECK(*seen.rbegin() == 6);
}

TEST_CASE("beta draws live in [0,1] and alpha=1 looks uniform") {
    Rng r(5);
    double mean = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double b = r.beta_symmetric(1.0);
        CHECK(b >= 0.0);
        CHECK(b <= 1.0);
        mean += b;
    }
    mean /= n;
    CHECK(mean == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("gamma mean matches its shape") {
    Rng r(9);
    for (double shape : {0.5, 1.0, 2.5}) {
        double mean = 0.0;
        const int n = 20000;
        for (int i = 0; i < n; ++i) mean += r.gamma(shape);
        mean /= n;
        CHECK(mean == doctest::Approx(shape).epsilon(0.05));
    }
}

TEST_CASE("sample_without_replacement returns distinct indices") {
    Rng r(13);
    auto picks = r.sample_without_replacement(10, 6);
    CHECK(picks.size() == 6);
    std::set<int> s(picks.begin(), picks.end());
    CHECK(s.size() == 6);
    for (int p : picks) {
        CHECK(p >= 0);
        CHECK(p < 10);
    }
}
