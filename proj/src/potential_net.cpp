#include "modectl/potential_net.hpp"

#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <string>

namespace modectl {

namespace {

constexpr const char* kCheckpointMagic = "modectl-potential-net";
constexpr int kCheckpointVersion = 1;

}  // namespace

Net make_potential_net(Eigen::Index hidden, std::uint64_t seed) {
    if (hidden < 1) {
        throw std::invalid_argument("hidden width must be at least 1");
    }
    std::mt19937_64 rng(seed);
    const double bound_in = 1.0 / std::sqrt(2.0);
    const double bound_out = 1.0 / std::sqrt(static_cast<double>(hidden));
    std::uniform_real_distribution<double> first(-bound_in, bound_in);
    std::uniform_real_distribution<double> second(-bound_out, bound_out);

    Net net(hidden);
    for (Eigen::Index j = 0; j < hidden; ++j) {
        net.W1()(j, 0) = first(rng);
        net.W1()(j, 1) = first(rng);
    }
    for (Eigen::Index j = 0; j < hidden; ++j) net.b1()(j) = first(rng);
    for (Eigen::Index j = 0; j < hidden; ++j) net.w2()(j) = second(rng);
    net.b2() = second(rng);
    return net;
}

void save_checkpoint(const std::filesystem::path& path, const NetCheckpoint& checkpoint) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write checkpoint " + path.string());
    }
    const Net::Vector theta = checkpoint.net.parameters();
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    out << "hidden " << checkpoint.net.hidden() << '\n';
    out << "seed " << checkpoint.seed << '\n';
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    if (checkpoint.period) {
        out << "period " << *checkpoint.period << '\n';
    }
    out << "params " << theta.size() << '\n';
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        out << theta(i) << '\n';
    }
    if (!out) {
        throw std::runtime_error("failed writing checkpoint " + path.string());
    }
}

NetCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint " + path.string());
    }
    auto fail = [&](const std::string& what) {
        return std::runtime_error("malformed checkpoint " + path.string() + ": " + what);
    };

    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != kCheckpointMagic) throw fail("bad header");
    if (version != kCheckpointVersion) throw fail("unsupported version " + std::to_string(version));

    NetCheckpoint checkpoint;
    Eigen::Index hidden = -1;
    std::string key;
    while (in >> key) {
        if (key == "hidden") {
            if (!(in >> hidden) || hidden < 1) throw fail("bad hidden width");
        } else if (key == "seed") {
            if (!(in >> checkpoint.seed)) throw fail("bad seed");
        } else if (key == "period") {
            double period = 0;
            if (!(in >> period) || !(period > 0)) throw fail("bad period");
            checkpoint.period = period;
        } else if (key == "params") {
            Eigen::Index count = 0;
            if (!(in >> count)) throw fail("bad parameter count");
            if (hidden < 1 || count != 4 * hidden + 1) throw fail("parameter count does not match hidden width");
            Net::Vector theta(count);
            for (Eigen::Index i = 0; i < count; ++i) {
                if (!(in >> theta(i))) throw fail("truncated parameter list");
            }
            checkpoint.net = Net(hidden);
            checkpoint.net.set_parameters(theta);
            if (!checkpoint.net.all_finite()) throw fail("non-finite parameters");
            return checkpoint;
        } else {
            throw fail("unknown key '" + key + "'");
        }
    }
    throw fail("missing parameter block");
}

}  // namespace modectl
