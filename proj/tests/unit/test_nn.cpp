#include <doctest.h>

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "trialsent/error.hpp"
#include "trialsent/nn.hpp"

using namespace trialsent;
using namespace trialsent::nn;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

// Writes a safetensors file by hand with the given dtype and raw bytes.
void write_raw_safetensors(const std::filesystem::path& path, const std::string& dtype,
                           std::vector<std::size_t> shape, const std::vector<unsigned char>& payload) {
    nlohmann::json header;
    header["t"] = {{"dtype", dtype}, {"shape", shape}, {"data_offsets", {0, payload.size()}}};
    const auto text = header.dump();
    std::ofstream out(path, std::ios::binary);
    std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out << text;
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<long>(payload.size()));
}

}  // namespace

TEST_CASE("linear backward matches finite differences") {
    Rng rng(1);
    Linear layer("l", 4, 3);
    layer.init(rng);
    Parameter x("x", 5, 4);
    x.value = random_matrix(5, 4, rng);
    const Matrix r = random_matrix(5, 3, rng);
    auto f = [&] { return (layer.forward(x.value).array() * r.array()).sum(); };
    auto params = layer.parameters();
    params.push_back(&x);
    zero_grads(params);
    x.grad = layer.backward(x.value, r, true);
    CHECK(testing::gradient_relative_error(params, f) < 1e-7);
}

TEST_CASE("layer norm backward matches finite differences") {
    Rng rng(2);
    Parameter gamma("g", 1, 6), beta("b", 1, 6), x("x", 4, 6);
    gamma.value = random_matrix(1, 6, rng);
    beta.value = random_matrix(1, 6, rng);
    x.value = random_matrix(4, 6, rng);
    const Matrix r = random_matrix(4, 6, rng);
    auto f = [&] { return (layer_norm(x.value, gamma, beta, 1e-12, nullptr).array() * r.array()).sum(); };
    LayerNormCache cache;
    layer_norm(x.value, gamma, beta, 1e-12, &cache);
    gamma.zero_grad();
    beta.zero_grad();
    x.grad = layer_norm_backward(cache, gamma, beta, r, true);
    CHECK(testing::gradient_relative_error({&gamma, &beta, &x}, f) < 1e-6);
}

TEST_CASE("gelu and softmax") {
    Rng rng(3);
    Parameter x("x", 3, 5);
    x.value = random_matrix(3, 5, rng);
    const Matrix r = random_matrix(3, 5, rng);
    x.grad = gelu_backward(x.value, r);
    CHECK(testing::gradient_relative_error({&x}, [&] { return (gelu(x.value).array() * r.array()).sum(); }) < 1e-7);

    const Matrix p = softmax_rows(Matrix::Constant(2, 4, 1000.0));
    CHECK(p(0, 0) == doctest::Approx(0.25));
    CHECK(softmax_rows(x.value).rowwise().sum().isApproxToConstant(1.0, 1e-12));
}

TEST_CASE("mlp backward matches finite differences in evaluation mode") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        Mlp mlp("m", {5, {4, 3}, 4, 0.1, 0.2, true}, rng);
        Parameter x("x", 6, 5);
        x.value = random_matrix(6, 5, rng);
        const Matrix r = random_matrix(6, 4, rng), s = random_matrix(6, 3, rng);
        auto f = [&] {
            const auto o = mlp.forward(x.value, nullptr, nullptr);
            return (o.out.array() * r.array()).sum() + (o.features.array() * s.array()).sum();
        };
        auto params = mlp.parameters();
        zero_grads(params);
        Mlp::Tape tape;
        mlp.forward(x.value, &tape, nullptr);
        x.grad = mlp.backward(tape, r, s, true);
        params.push_back(&x);
        CHECK(testing::gradient_relative_error(params, f) < 1e-6);
    }
}

TEST_CASE("dropout masks are inverted and seeded") {
    CHECK(dropout_mask(3, 3, 0.5, nullptr).isOnes());
    Rng a(4), b(4);
    const Matrix m = dropout_mask(50, 50, 0.2, &a);
    CHECK(m == dropout_mask(50, 50, 0.2, &b));
    for (Eigen::Index i = 0; i < m.size(); ++i) CHECK((m.data()[i] == 0.0 || m.data()[i] == doctest::Approx(1.25)));
}

TEST_CASE("adam first step moves each weight by the learning rate") {
    Parameter p("p", 1, 3);
    p.value << 1.0, 2.0, 3.0;
    p.grad << 0.5, -2.0, 0.0;
    Adam adam({&p}, {0.1, 0.9, 0.999, 1e-12});
    adam.step();
    CHECK(p.value(0, 0) == doctest::Approx(0.9));
    CHECK(p.value(0, 1) == doctest::Approx(2.1));
    CHECK(p.value(0, 2) == doctest::Approx(3.0));
    CHECK(adam.steps() == 1);
}

TEST_CASE("safetensors round trip") {
    const auto dir = testing::scratch_dir("nn_safetensors");
    Rng rng(5);
    const Matrix w = random_matrix(3, 4, rng);
    const RowVector b = random_matrix(1, 4, rng).row(0);
    save_safetensors(dir / "f64.safetensors", {{"w", to_tensor(w)}, {"b", to_tensor(Matrix(b))}}, StorageType::F64);
    auto back = load_safetensors(dir / "f64.safetensors");
    CHECK(to_matrix(back.at("w")) == w);
    CHECK(back.at("w").shape == std::vector<std::size_t>{3, 4});

    save_safetensors(dir / "f32.safetensors", {{"w", to_tensor(w)}}, StorageType::F32);
    back = load_safetensors(dir / "f32.safetensors");
    CHECK(to_matrix(back.at("w")).isApprox(w, 1e-6));

    save_safetensors(dir / "again.safetensors", {{"w", to_tensor(w)}, {"b", to_tensor(Matrix(b))}}, StorageType::F64);
    std::ifstream x(dir / "f64.safetensors", std::ios::binary), y(dir / "again.safetensors", std::ios::binary);
    CHECK(std::string(std::istreambuf_iterator<char>(x), {}) == std::string(std::istreambuf_iterator<char>(y), {}));
}

TEST_CASE("half and bfloat16 tensors are widened") {
    const auto dir = testing::scratch_dir("nn_half");
    // 1.0, -2.0, 0.5 in IEEE half
    write_raw_safetensors(dir / "f16.safetensors", "F16", {3}, {0x00, 0x3C, 0x00, 0xC0, 0x00, 0x38});
    auto t = load_safetensors(dir / "f16.safetensors").at("t");
    CHECK(t.data == std::vector<double>{1.0, -2.0, 0.5});
    // 1.0, 3.0 in bfloat16
    write_raw_safetensors(dir / "bf16.safetensors", "BF16", {1, 2}, {0x80, 0x3F, 0x40, 0x40});
    t = load_safetensors(dir / "bf16.safetensors").at("t");
    CHECK(t.data == std::vector<double>{1.0, 3.0});
}

TEST_CASE("corrupt safetensors raise LoadError") {
    const auto dir = testing::scratch_dir("nn_corrupt");
    CHECK_THROWS_AS(load_safetensors(dir / "missing.safetensors"), LoadError);
    std::ofstream(dir / "short.safetensors") << "abc";
    CHECK_THROWS_AS(load_safetensors(dir / "short.safetensors"), LoadError);
    write_raw_safetensors(dir / "overrun.safetensors", "F32", {4}, {0, 0, 0, 0});
    CHECK_THROWS_AS(load_safetensors(dir / "overrun.safetensors"), LoadError);
    write_raw_safetensors(dir / "dtype.safetensors", "I8", {1}, {1});
    CHECK_THROWS_AS(load_safetensors(dir / "dtype.safetensors"), LoadError);
}
