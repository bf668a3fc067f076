#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dsdtex/guidance.hpp"

namespace dsdtex {

namespace wire {

// Message body: one JSON header line terminated by '\n', then the payload of every
// tensor listed in header["tensors"] as little-endian f32, in list order.
// Each list entry is {"name": str, "dtype": "f32", "shape": [int...]}.
struct NamedTensor {
    std::string name;
    ad::Tensor tensor;
};

struct Message {
    nlohmann::json header = nlohmann::json::object();
    std::vector<NamedTensor> tensors;

    const ad::Tensor& tensor(const std::string& name) const;
    const ad::Tensor* find(const std::string& name) const;
};

class ProtocolError : public GuidanceError {
public:
    ProtocolError(const std::string& what, std::size_t offset)
        : GuidanceError(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

// Fills header["tensors"] from `message.tensors`. Values are narrowed to f32.
std::string encode(const Message& message);
Message decode(std::string_view body);

}  // namespace wire

// Transport failure, timeout or non-200 status.
class RemoteError : public GuidanceError {
public:
    using GuidanceError::GuidanceError;
};

// Request rejected locally before anything is sent.
class ValidationError : public GuidanceError {
public:
    using GuidanceError::GuidanceError;
};

struct RemoteConfig {
    std::string endpoint = "http://127.0.0.1:8080";
    double timeout_seconds = 30.0;
    bool depth_conditioning = true;

    bool operator==(const RemoteConfig&) const = default;
};

class RemoteClient {
public:
    explicit RemoteClient(RemoteConfig config);
    ~RemoteClient();

    Embedding embed_text(const std::string& prompt);
    ad::Tensor encode_image(const ad::Tensor& image);
    ad::Tensor decode_latent(const ad::Tensor& latent);
    ad::Tensor predict_noise(const ad::Tensor& z_t, double t, const Embedding& embedding,
                             const std::optional<Embedding>& negative_embedding, const std::optional<ad::Tensor>& depth,
                             std::optional<double> omega);
    double clip_score(const ad::Tensor& image, const std::string& prompt);

    const RemoteConfig& config() const { return config_; }
    // Sends one request and validates the echoed request id.
    wire::Message call(const std::string& path, wire::Message request);

private:
    struct Impl;
    RemoteConfig config_;
    std::unique_ptr<Impl> impl_;
    std::mutex mutex_;
    std::uint64_t next_id_ = 1;
};

// Server-side CFG; latent gradients are returned to image space as
// x - decode(z - g).
class RemoteBackend : public GuidanceBackend {
public:
    RemoteBackend(RemoteConfig config, NoiseSchedule schedule);

    Embedding embed_text(const std::string& prompt) override { return client_.embed_text(prompt); }
    ad::Tensor encode_image(const ad::Tensor& image) override { return client_.encode_image(image); }
    ad::Tensor image_gradient(const ad::Tensor& image, const ad::Tensor& latent, const ad::Tensor& latent_grad) override;
    ad::Tensor predict_guided(const DenoiserRequest& request, double omega) override;
    double alpha(double t) const override { return schedule_.alpha(t); }

    RemoteClient& client() { return client_; }

private:
    RemoteClient client_;
    NoiseSchedule schedule_;
};

}  // namespace dsdtex
