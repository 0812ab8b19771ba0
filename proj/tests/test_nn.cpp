#include <doctest.h>

#include <cmath>
#include <memory>

#include "mergerl/nn.hpp"
#include "mergerl/verify.hpp"

using namespace mergerl;

namespace {

// unfused reference: Q/K/V, scores, softmax, and the weighted sum, all in
// plain loops independent of the tape kernels
Tensor attention_head_ref(const Tensor& S, const Tensor& Wq, const Tensor& Wk, const Tensor& Wv) {
    const int T = S.rows, n = S.cols, d = Wq.cols;
    auto project = [&](const Tensor& W) {
        Tensor P(T, d);
        for (int i = 0; i < T; ++i)
            for (int j = 0; j < d; ++j)
                for (int k = 0; k < n; ++k) P.at(i, j) += S.at(i, k) * W.at(k, j);
        return P;
    };
    Tensor Q = project(Wq), K = project(Wk), V = project(Wv);
    Tensor out(T, d);
    for (int i = 0; i < T; ++i) {
        std::vector<double> scores(T);
        for (int j = 0; j < T; ++j) {
            double s = 0.0;
            for (int k = 0; k < d; ++k) s += Q.at(i, k) * K.at(j, k);
            scores[j] = s / std::sqrt(static_cast<double>(d));
        }
        double mx = scores[0];
        for (double s : scores) mx = std::max(mx, s);
        double denom = 0.0;
        for (auto& s : scores) {
            s = std::exp(s - mx);
            denom += s;
        }
        for (auto& s : scores) s /= denom;
        for (int j = 0; j < T; ++j)
            for (int k = 0; k < d; ++k) out.at(i, k) += scores[j] * V.at(j, k);
    }
    return out;
}

AttentionHeadParams random_head(Rng& rng, int n, int d) {
    return {Parameter("Wq", uniform_tensor(rng, n, d, -1.0, 1.0)),
            Parameter("Wk", uniform_tensor(rng, n, d, -1.0, 1.0)),
            Parameter("Wv", uniform_tensor(rng, n, d, -1.0, 1.0))};
}

}  // namespace

TEST_CASE("attention_head: singleton sequence has attention weight [1]") {
    Rng rng(21);
    Tensor S = uniform_tensor(rng, 1, 3, -1.0, 1.0);
    auto head = random_head(rng, 3, 2);
    Tape tape;
    Var out = attention_head(tape, tape.constant(S), head, 1);
    // weight 1 on the only row means output == the V projection of that row
    Var v = tape.matmul(tape.constant(S), tape.param(head.Wv));
    for (int i = 0; i < tape.value(v).numel(); ++i)
        CHECK(std::fabs(tape.value(out).data[i] - tape.value(v).data[i]) < 1e-12);
}

TEST_CASE("attention_head: identical rows attend uniformly, output rows equal") {
    Rng rng(22);
    std::vector<double> row = {0.3, -1.2, 0.8, 0.1};
    Tensor S(5, 4);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 4; ++j) S.at(i, j) = row[j];
    auto head = random_head(rng, 4, 3);
    Tape tape;
    Var out = attention_head(tape, tape.constant(S), head, 5);
    const Tensor& O = tape.value(out);
    for (int i = 1; i < O.rows; ++i)
        for (int j = 0; j < O.cols; ++j)
            CHECK(O.at(i, j) == doctest::Approx(O.at(0, j)).epsilon(1e-12));
}

TEST_CASE("attention_head: random 4x4 input matches the unfused oracle") {
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor S = uniform_tensor(rng, 4, 4, -1.5, 1.5);
        auto head = random_head(rng, 4, 2);
        Tape tape;
        Var out = attention_head(tape, tape.constant(S), head, 4);
        Tensor expected = attention_head_ref(S, head.Wq.value, head.Wk.value, head.Wv.value);
        for (int i = 0; i < expected.numel(); ++i)
            CHECK(std::fabs(tape.value(out).data[i] - expected.data[i]) < 1e-10);
    }
}

TEST_CASE("attention weights: each row sums to one") {
    Rng rng(24);
    Tensor S = uniform_tensor(rng, 6, 3, -2.0, 2.0);
    auto head = random_head(rng, 3, 2);
    Tape tape;
    Var q = tape.matmul(tape.constant(S), tape.param(head.Wq));
    Var k = tape.matmul(tape.constant(S), tape.param(head.Wk));
    Var attn = tape.row_softmax(tape.block_scores(q, k, 6, 1.0 / std::sqrt(2.0)));
    const Tensor& A = tape.value(attn);
    for (int i = 0; i < A.rows; ++i) {
        double sum = 0.0;
        for (int j = 0; j < A.cols; ++j) sum += A.at(i, j);
        CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("attention: invariant under constant shifts of the logits") {
    Rng rng(25);
    Tensor S = uniform_tensor(rng, 5, 3, -1.0, 1.0);
    auto head = random_head(rng, 3, 2);
    auto run_with_shift = [&](double c) {
        Tape tape;
        Var s = tape.constant(S);
        Var q = tape.matmul(s, tape.param(head.Wq));
        Var k = tape.matmul(s, tape.param(head.Wk));
        Var v = tape.matmul(s, tape.param(head.Wv));
        Var scores = tape.block_scores(q, k, 5, 1.0 / std::sqrt(2.0));
        Var shifted = tape.add(scores, tape.constant(Tensor::full(5, 5, c)));
        return tape.value(tape.block_apply(tape.row_softmax(shifted), v, 5));
    };
    Tensor base = run_with_shift(0.0);
    Tensor shifted = run_with_shift(13.75);
    for (int i = 0; i < base.numel(); ++i) CHECK(std::fabs(base.data[i] - shifted.data[i]) < 1e-12);
}

TEST_CASE("multi_head_attention: single head with identity Wo reduces to the head") {
    Rng rng(26);
    Tensor S = uniform_tensor(rng, 4, 3, -1.0, 1.0);
    std::vector<AttentionHeadParams> heads;
    heads.push_back(random_head(rng, 3, 3));
    Parameter Wo("Wo", Tensor::identity(3));
    AttentionHeadParams solo{Parameter("Wq", heads[0].Wq.value),
                             Parameter("Wk", heads[0].Wk.value),
                             Parameter("Wv", heads[0].Wv.value)};
    Tape tape;
    Var mha = multi_head_attention(tape, tape.constant(S), heads, Wo, 4);
    Var single = attention_head(tape, tape.constant(S), solo, 4);
    for (int i = 0; i < tape.value(mha).numel(); ++i)
        CHECK(tape.value(mha).data[i] == doctest::Approx(tape.value(single).data[i]).epsilon(1e-12));
}

TEST_CASE("multi_head_attention: duplicated head weights give identical blocks") {
    Rng rng(27);
    Tensor S = uniform_tensor(rng, 4, 4, -1.0, 1.0);
    auto h = random_head(rng, 4, 2);
    std::vector<AttentionHeadParams> heads;
    heads.push_back({Parameter("Wq", h.Wq.value), Parameter("Wk", h.Wk.value),
                     Parameter("Wv", h.Wv.value)});
    heads.push_back({Parameter("Wq", h.Wq.value), Parameter("Wk", h.Wk.value),
                     Parameter("Wv", h.Wv.value)});
    Parameter Wo("Wo", Tensor::identity(4));
    Tape tape;
    Var out = multi_head_attention(tape, tape.constant(S), heads, Wo, 4);
    const Tensor& O = tape.value(out);
    for (int i = 0; i < O.rows; ++i)
        for (int j = 0; j < 2; ++j)
            CHECK(O.at(i, j) == doctest::Approx(O.at(i, j + 2)).epsilon(1e-12));
}

TEST_CASE("multi_head_attention: random config matches the unfused oracle") {
    Rng rng(28);
    Tensor S = uniform_tensor(rng, 5, 4, -1.0, 1.0);
    std::vector<AttentionHeadParams> heads;
    heads.push_back(random_head(rng, 4, 2));
    heads.push_back(random_head(rng, 4, 3));
    Parameter Wo("Wo", uniform_tensor(rng, 5, 4, -1.0, 1.0));
    Tape tape;
    Var out = multi_head_attention(tape, tape.constant(S), heads, Wo, 5);

    Tensor z1 = attention_head_ref(S, heads[0].Wq.value, heads[0].Wk.value, heads[0].Wv.value);
    Tensor z2 = attention_head_ref(S, heads[1].Wq.value, heads[1].Wk.value, heads[1].Wv.value);
    Tensor cat(5, 5);
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 2; ++j) cat.at(i, j) = z1.at(i, j);
        for (int j = 0; j < 3; ++j) cat.at(i, j + 2) = z2.at(i, j);
    }
    Tensor expected(5, 4);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 5; ++k) expected.at(i, j) += cat.at(i, k) * Wo.value.at(k, j);
    for (int i = 0; i < expected.numel(); ++i)
        CHECK(std::fabs(tape.value(out).data[i] - expected.data[i]) < 1e-10);
}

TEST_CASE("multi_head_attention: head dimension mismatch raises") {
    Rng rng(29);
    Tensor S = uniform_tensor(rng, 3, 4, -1.0, 1.0);
    std::vector<AttentionHeadParams> heads;
    heads.push_back(random_head(rng, 4, 2));
    Parameter Wo("Wo", uniform_tensor(rng, 5, 4, -1.0, 1.0));  // expects d=5, heads give 2
    Tape tape;
    CHECK_THROWS_AS(multi_head_attention(tape, tape.constant(S), heads, Wo, 3), ShapeError);
}

TEST_CASE("ffn_residual: zero FFN weights reduce to layer norm of the input") {
    Rng rng(30);
    Tensor x = uniform_tensor(rng, 2, 4, -1.0, 1.0);
    FfnParams ffn{Parameter("W1", Tensor(6, 4)), Parameter("b1", Tensor(1, 6)),
                  Parameter("W2", Tensor(4, 6)), Parameter("b2", Tensor(1, 4))};
    Parameter gain("g", Tensor::full(1, 4, 1.0));
    Parameter bias("b", Tensor(1, 4));
    Tape tape;
    Var out = ffn_residual(tape, tape.constant(x), ffn, gain, bias);
    Var ln = tape.row_layer_norm(tape.constant(x), gain, bias, kLayerNormEps);
    for (int i = 0; i < x.numel(); ++i)
        CHECK(tape.value(out).data[i] == doctest::Approx(tape.value(ln).data[i]).epsilon(1e-12));
}

TEST_CASE("ffn_residual: zero input with zero biases yields the output bias") {
    Rng rng(31);
    FfnParams ffn{Parameter("W1", uniform_tensor(rng, 6, 4, -1.0, 1.0)),
                  Parameter("b1", Tensor(1, 6)),
                  Parameter("W2", uniform_tensor(rng, 4, 6, -1.0, 1.0)),
                  Parameter("b2", Tensor(1, 4))};
    Parameter gain("g", Tensor::full(1, 4, 1.0));
    Parameter bias("b", uniform_tensor(rng, 1, 4, -2.0, 2.0));
    Tape tape;
    Var out = ffn_residual(tape, tape.constant(Tensor(1, 4)), ffn, gain, bias);
    for (int j = 0; j < 4; ++j) CHECK(tape.value(out).at(0, j) == bias.value.at(0, j));
}

TEST_CASE("gradcheck: attention, MHA, FFN and layer norm suites pass") {
    auto results = run_gradcheck_suites(/*seed=*/777, /*configs_per_layer=*/5);
    for (const auto& r : results) {
        INFO(r.name, " max_rel_error=", r.max_rel_error);
        CHECK(r.passed);
    }
}
