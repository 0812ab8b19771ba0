#include <doctest.h>

#include <cmath>
#include <memory>

#include "mergerl/encoder.hpp"
#include "mergerl/verify.hpp"

using namespace mergerl;

TEST_CASE("temporal_weights: last-to-first ratio is e^0.5") {
    for (int w : {1, 4, 9, 20}) {
        Tensor a = temporal_weights(w);
        REQUIRE(a.rows == w + 1);
        CHECK(a.data.back() / a.data.front() == doctest::Approx(std::exp(0.5)).epsilon(1e-9));
    }
}

TEST_CASE("temporal_weights: w=1 evaluates softmax([0.5, 1.0])") {
    Tensor a = temporal_weights(1);
    // independent scalar evaluation
    const double e0 = std::exp(0.5), e1 = std::exp(1.0);
    CHECK(a.data[0] == doctest::Approx(e0 / (e0 + e1)).epsilon(1e-12));
    CHECK(a.data[1] == doctest::Approx(e1 / (e0 + e1)).epsilon(1e-12));
    CHECK(a.data[0] == doctest::Approx(0.37754).epsilon(1e-4));
    CHECK(a.data[1] == doctest::Approx(0.62246).epsilon(1e-4));
}

TEST_CASE("temporal_weights: w=0 is the singleton [1.0]") {
    Tensor a = temporal_weights(0);
    REQUIRE(a.numel() == 1);
    CHECK(a.data[0] == 1.0);
}

TEST_CASE("temporal_weights: increasing, normalized, constant adjacent ratio") {
    for (int w : {1, 3, 9, 15}) {
        Tensor a = temporal_weights(w);
        double sum = 0.0;
        for (int i = 0; i <= w; ++i) {
            CHECK(a.data[i] > 0.0);
            if (i > 0) {
                CHECK(a.data[i] > a.data[i - 1]);
                CHECK(a.data[i] / a.data[i - 1] ==
                      doctest::Approx(std::exp(0.5 / w)).epsilon(1e-9));
            }
            sum += a.data[i];
        }
        CHECK(std::fabs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("encode: output dimension is 4 + 2*d_model and the own prefix passes through") {
    Rng rng(51);
    auto p = EncoderParams::init(9, 32, 4, 64, rng);
    InformationState s;
    s.own = {0.3, -0.1, 0.7, 0.2};
    s.front_hist = uniform_tensor(rng, 10, 4, -1.0, 1.0);
    s.opp_hist = uniform_tensor(rng, 10, 4, -1.0, 1.0);
    auto out = encode(s, p, false);
    REQUIRE(out.size() == 68);
    for (int j = 0; j < 4; ++j) CHECK(out[j] == s.own[j]);
}

TEST_CASE("encode: zero neighbor histories with zero biases yield the output LN bias") {
    Rng rng(52);
    auto p = EncoderParams::init(9, 8, 2, 16, rng);
    // biases are zero-initialized; give the output LN bias a signature value
    for (int j = 0; j < 8; ++j) {
        p.front.ln_out_bias.value.at(0, j) = 0.25 * (j + 1);
        p.opp.ln_out_bias.value.at(0, j) = -0.5 * (j + 1);
    }
    InformationState s;
    s.own = {1.0, 2.0, 3.0, 4.0};
    s.front_hist = Tensor(10, 4);
    s.opp_hist = Tensor(10, 4);
    auto out = encode(s, p, false);
    REQUIRE(out.size() == 20);
    for (int j = 0; j < 8; ++j) {
        CHECK(out[4 + j] == doctest::Approx(p.front.ln_out_bias.value.at(0, j)).epsilon(1e-12));
        CHECK(out[12 + j] == doctest::Approx(p.opp.ln_out_bias.value.at(0, j)).epsilon(1e-12));
    }
}

TEST_CASE("encode: ablation changes values but never shapes") {
    Rng rng(53);
    auto p = EncoderParams::init(9, 16, 2, 32, rng);
    InformationState s;
    s.own = {0.1, 0.2, 0.3, 0.4};
    s.front_hist = uniform_tensor(rng, 10, 4, -1.0, 1.0);
    s.opp_hist = uniform_tensor(rng, 10, 4, -1.0, 1.0);
    auto full = encode(s, p, false);
    auto ablated = encode(s, p, true);
    CHECK(full.size() == ablated.size());
    bool differs = false;
    for (size_t i = 4; i < full.size(); ++i)
        if (full[i] != ablated[i]) differs = true;
    CHECK(differs);
}

TEST_CASE("encode: end-to-end gradcheck below 1e-6 relative error") {
    GradCheck checker;
    Rng rng(54);
    int done = 0;
    for (int attempt = 0; attempt < 40 && done < 5; ++attempt) {
        auto enc = std::make_shared<EncoderParams>(EncoderParams::init(2, 4, 2, 6, rng));
        auto own = std::make_shared<Parameter>("own", uniform_tensor(rng, 1, 4, -1.0, 1.0));
        auto f = std::make_shared<Parameter>("f", uniform_tensor(rng, 3, 4, -1.0, 1.0));
        auto o = std::make_shared<Parameter>("o", uniform_tensor(rng, 3, 4, -1.0, 1.0));
        Rng ro = rng.fork(attempt);
        auto build = [=](Tape& tape) mutable {
            Rng wr = ro;
            Var out = encode_batch(tape, tape.param(*own), tape.param(*f), tape.param(*o), *enc,
                                   false);
            Tensor w(1, tape.value(out).cols);
            for (auto& x : w.data) x = wr.uniform(-1.0, 1.0);
            return tape.sum_all(tape.hadamard(out, tape.constant(std::move(w))));
        };
        if (!checker.margin_ok(build)) continue;
        auto params = enc->params();
        params.push_back(own.get());
        params.push_back(f.get());
        params.push_back(o.get());
        CHECK(checker.max_rel_error(build, params) < 1e-6);
        ++done;
    }
    CHECK(done == 5);
}

TEST_CASE("pooled_embedding: identical rows collapse to that row") {
    Tensor Z(4, 3);
    for (int i = 0; i < 4; ++i) {
        Z.at(i, 0) = 1.5;
        Z.at(i, 1) = -2.0;
        Z.at(i, 2) = 0.25;
    }
    auto e = pooled_embedding(Z, temporal_weights(3));
    CHECK(e[0] == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(e[1] == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(e[2] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("pooled_embedding: one-hot weights select a row") {
    Rng rng(55);
    Tensor Z = uniform_tensor(rng, 5, 4, -1.0, 1.0);
    Tensor onehot(5, 1);
    onehot.at(4, 0) = 1.0;
    auto e = pooled_embedding(Z, onehot);
    for (int j = 0; j < 4; ++j) CHECK(e[j] == Z.at(4, j));
}

TEST_CASE("pooled_embedding: matches the naive double-loop oracle") {
    Rng rng(56);
    Tensor Z = uniform_tensor(rng, 10, 8, -2.0, 2.0);
    Tensor alpha = temporal_weights(9);
    auto e = pooled_embedding(Z, alpha);
    for (int j = 0; j < 8; ++j) {
        double s = 0.0;
        for (int t = 0; t < 10; ++t) s += Z.at(t, j) * alpha.data[t];
        CHECK(std::fabs(e[j] - s) < 1e-12);
    }
}

TEST_CASE("pooled_embedding: convex combination stays within column bounds") {
    Rng rng(57);
    for (int trial = 0; trial < 50; ++trial) {
        const int rows = 2 + rng.uniform_int(9);
        Tensor Z = uniform_tensor(rng, rows, 5, -3.0, 3.0);
        auto e = pooled_embedding(Z, temporal_weights(rows - 1));
        for (int j = 0; j < 5; ++j) {
            double lo = Z.at(0, j), hi = Z.at(0, j);
            for (int t = 1; t < rows; ++t) {
                lo = std::min(lo, Z.at(t, j));
                hi = std::max(hi, Z.at(t, j));
            }
            CHECK(e[j] >= lo - 1e-12);
            CHECK(e[j] <= hi + 1e-12);
        }
    }
}

TEST_CASE("pooled_embedding: length mismatch raises") {
    Tensor Z(4, 3);
    CHECK_THROWS_AS(pooled_embedding(Z, temporal_weights(9)), ShapeError);
}

TEST_CASE("scale_information_state: fixed constants divide each feature") {
    InformationState raw;
    raw.own = {400.0, 10.0, 15.0, 6.0};
    raw.front_hist = Tensor::full(2, 4, 0.0);
    raw.front_hist.at(0, 0) = 200.0;
    raw.front_hist.at(0, 2) = 7.5;
    raw.opp_hist = Tensor(2, 4);
    auto s = scale_information_state(raw);
    CHECK(s.own[0] == 1.0);
    CHECK(s.own[1] == 1.0);
    CHECK(s.own[2] == 1.0);
    CHECK(s.own[3] == 1.0);
    CHECK(s.front_hist.at(0, 0) == 0.5);
    CHECK(s.front_hist.at(0, 2) == 0.5);
}
