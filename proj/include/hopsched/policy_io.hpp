#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "hopsched/errors.hpp"
#include "hopsched/io_util.hpp"
#include "hopsched/neural.hpp"

namespace hopsched {

/// Cluster and normalization settings the policy was trained against;
/// stored with the parameters so inference can refuse mismatched use.
struct PolicyMetadata {
    int n_max = 40;
    int radix = 8;
    int pod_count = 8;
};

namespace detail {

inline void push_u32(std::string& buf, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    buf.append(b, 4);
}

inline void push_u64(std::string& buf, std::uint64_t v) {
    char b[8];
    std::memcpy(b, &v, 8);
    buf.append(b, 8);
}

inline void push_f32(std::string& buf, float v) {
    char b[4];
    std::memcpy(b, &v, 4);
    buf.append(b, 4);
}

class ByteReader {
public:
    explicit ByteReader(const std::string& data) : data_(data) {}

    std::uint32_t u32() {
        std::uint32_t v;
        take(&v, 4);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        take(&v, 8);
        return v;
    }
    float f32() {
        float v;
        take(&v, 4);
        return v;
    }
    std::string bytes(std::size_t n) {
        if (pos_ + n > data_.size()) throw IntegrityError("policy file truncated");
        std::string out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    std::size_t position() const { return pos_; }

private:
    void take(void* out, std::size_t n) {
        if (pos_ + n > data_.size()) throw IntegrityError("policy file truncated");
        std::memcpy(out, data_.data() + pos_, n);
        pos_ += n;
    }
    const std::string& data_;
    std::size_t pos_ = 0;
};

inline void push_tensor(std::string& buf, const std::vector<double>& t) {
    push_u32(buf, 1);  // rank
    push_u32(buf, static_cast<std::uint32_t>(t.size()));
    for (double v : t) push_f32(buf, static_cast<float>(v));
}

inline std::vector<double> read_tensor(ByteReader& r, std::size_t expected) {
    const std::uint32_t rank = r.u32();
    if (rank != 1) throw IntegrityError("unexpected tensor rank in policy file");
    const std::uint32_t n = r.u32();
    if (n != expected) throw IntegrityError("parameter tensor size does not match architecture");
    std::vector<double> out(n);
    for (std::uint32_t i = 0; i < n; ++i) out[i] = static_cast<double>(r.f32());
    return out;
}

}  // namespace detail

inline constexpr char kPolicyMagic[4] = {'H', 'S', 'N', 'P'};
inline constexpr std::uint32_t kPolicyFormatVersion = 1;

inline void save_policy(const std::string& path, const PolicyNetwork& net,
                        const PolicyMetadata& meta) {
    std::string buf;
    buf.append(kPolicyMagic, 4);
    detail::push_u32(buf, kPolicyFormatVersion);
    detail::push_u32(buf, static_cast<std::uint32_t>(net.arch));
    detail::push_u32(buf, static_cast<std::uint32_t>(net.q));
    detail::push_u32(buf, static_cast<std::uint32_t>(net.beta));
    detail::push_u32(buf, static_cast<std::uint32_t>(meta.n_max));
    detail::push_u32(buf, static_cast<std::uint32_t>(meta.radix));
    detail::push_u32(buf, static_cast<std::uint32_t>(meta.pod_count));
    detail::push_u32(buf, 2);  // tensor count: actor, critic
    detail::push_tensor(buf, net.actor_params);
    detail::push_tensor(buf, net.critic_params);
    detail::push_u64(buf, fnv1a_64(buf));
    write_file(path, buf);
}

inline std::pair<PolicyNetwork, PolicyMetadata> load_policy(const std::string& path) {
    const std::string data = read_file(path);
    if (data.size() < 12) throw IntegrityError("policy file too short: " + path);
    const std::string payload = data.substr(0, data.size() - 8);
    std::uint64_t stored;
    std::memcpy(&stored, data.data() + data.size() - 8, 8);
    if (fnv1a_64(payload) != stored)
        throw IntegrityError("policy file checksum mismatch: " + path);

    detail::ByteReader r(payload);
    if (r.bytes(4) != std::string(kPolicyMagic, 4))
        throw IntegrityError("not a policy file: " + path);
    if (r.u32() != kPolicyFormatVersion)
        throw IntegrityError("unsupported policy file version in " + path);
    const auto arch = static_cast<Arch>(r.u32());
    if (arch < Arch::kFcn1 || arch > Arch::kCnn3)
        throw IntegrityError("unknown architecture tag in " + path);
    const int q = static_cast<int>(r.u32());
    const int beta = static_cast<int>(r.u32());
    PolicyMetadata meta;
    meta.n_max = static_cast<int>(r.u32());
    meta.radix = static_cast<int>(r.u32());
    meta.pod_count = static_cast<int>(r.u32());
    if (r.u32() != 2) throw IntegrityError("unexpected tensor count in " + path);

    PolicyNetwork net = make_policy_network(arch, q, beta);
    net.actor_params = detail::read_tensor(r, net.actor.param_count());
    net.critic_params = detail::read_tensor(r, net.critic.param_count());
    return {std::move(net), meta};
}

}  // namespace hopsched
