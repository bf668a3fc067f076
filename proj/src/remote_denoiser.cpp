#include "dsdtex/remote_denoiser.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include <httplib.h>

namespace dsdtex {

static_assert(std::endian::native == std::endian::little, "wire payloads assume a little-endian host");

namespace wire {

const ad::Tensor* Message::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t.tensor;
    return nullptr;
}

const ad::Tensor& Message::tensor(const std::string& name) const {
    if (const auto* t = find(name)) return *t;
    throw ProtocolError("message has no tensor '" + name + "'", 0);
}

std::string encode(const Message& message) {
    nlohmann::json header = message.header;
    header["tensors"] = nlohmann::json::array();
    std::size_t payload = 0;
    for (const auto& t : message.tensors) {
        header["tensors"].push_back({{"name", t.name}, {"dtype", "f32"}, {"shape", t.tensor.shape}});
        payload += t.tensor.size() * 4;
    }
    std::string body = header.dump();
    body.push_back('\n');
    std::size_t at = body.size();
    body.resize(at + payload);
    for (const auto& t : message.tensors)
        for (double v : t.tensor.data) {
            auto f = static_cast<float>(v);
            std::memcpy(&body[at], &f, 4);
            at += 4;
        }
    return body;
}

Message decode(std::string_view body) {
    auto newline = body.find('\n');
    if (newline == std::string_view::npos) throw ProtocolError("missing header terminator", body.size());
    Message msg;
    try {
        msg.header = nlohmann::json::parse(body.substr(0, newline));
    } catch (const nlohmann::json::parse_error& e) {
        throw ProtocolError(std::string("malformed header: ") + e.what(), e.byte > 0 ? e.byte - 1 : 0);
    }
    if (!msg.header.is_object()) throw ProtocolError("header is not a JSON object", 0);
    if (!msg.header.contains("tensors") || !msg.header["tensors"].is_array())
        throw ProtocolError("header lacks a 'tensors' list", newline);

    std::size_t at = newline + 1;
    for (const auto& entry : msg.header["tensors"]) {
        if (!entry.is_object() || !entry.contains("name") || !entry["name"].is_string() || !entry.contains("shape") ||
            !entry["shape"].is_array())
            throw ProtocolError("tensor entry needs 'name' and 'shape'", newline);
        if (entry.value("dtype", std::string("f32")) != "f32")
            throw ProtocolError("unsupported dtype '" + entry["dtype"].dump() + "'", newline);
        ad::Shape shape;
        for (const auto& d : entry["shape"]) {
            if (!d.is_number_unsigned()) throw ProtocolError("tensor shape must hold non-negative integers", newline);
            shape.push_back(d.get<std::size_t>());
        }
        std::size_t count = ad::element_count(shape);
        if (body.size() - at < count * 4)
            throw ProtocolError("payload for tensor '" + entry["name"].get<std::string>() + "' is truncated", body.size());
        std::vector<double> data(count);
        for (std::size_t i = 0; i < count; ++i, at += 4) {
            float f;
            std::memcpy(&f, body.data() + at, 4);
            data[i] = f;
        }
        msg.tensors.push_back({entry["name"].get<std::string>(), ad::Tensor(std::move(shape), std::move(data))});
    }
    if (at != body.size()) throw ProtocolError("trailing bytes after payload", at);
    msg.header.erase("tensors");
    return msg;
}

}  // namespace wire

struct RemoteClient::Impl {
    httplib::Client client;
    explicit Impl(const std::string& endpoint) : client(endpoint) {}
};

RemoteClient::RemoteClient(RemoteConfig config) : config_(std::move(config)) {
    impl_ = std::make_unique<Impl>(config_.endpoint);
    if (!impl_->client.is_valid()) throw RemoteError("invalid endpoint '" + config_.endpoint + "'");
    auto secs = static_cast<time_t>(config_.timeout_seconds);
    auto usecs = static_cast<time_t>((config_.timeout_seconds - static_cast<double>(secs)) * 1e6);
    impl_->client.set_connection_timeout(secs, usecs);
    impl_->client.set_read_timeout(secs, usecs);
    impl_->client.set_write_timeout(secs, usecs);
}

RemoteClient::~RemoteClient() = default;

wire::Message RemoteClient::call(const std::string& path, wire::Message request) {
    std::lock_guard lock(mutex_);
    std::string id = "req-" + std::to_string(next_id_++);
    request.header["request_id"] = id;
    auto res = impl_->client.Post(path, wire::encode(request), "application/octet-stream");
    if (!res) throw RemoteError(path + ": " + httplib::to_string(res.error()));
    if (res->status != 200) {
        std::string detail = res->body;
        try {
            auto err = wire::decode(res->body);
            detail = err.header.value("error", detail);
        } catch (const wire::ProtocolError&) {
        }
        throw RemoteError(path + ": HTTP " + std::to_string(res->status) + ": " + detail);
    }
    auto reply = wire::decode(res->body);
    if (!reply.header.contains("request_id") || reply.header["request_id"] != id)
        throw wire::ProtocolError(path + ": response does not echo request id " + id, 0);
    return reply;
}

Embedding RemoteClient::embed_text(const std::string& prompt) {
    if (prompt.empty()) throw ValidationError("embed_text: empty prompt");
    wire::Message req;
    req.header["prompt"] = prompt;
    auto reply = call("/embed_text", std::move(req));
    return reply.tensor("embedding").data;
}

ad::Tensor RemoteClient::encode_image(const ad::Tensor& image) {
    if (image.shape.size() != 3 || image.shape[2] != 3) throw ValidationError("encode_image: image must be [H, W, 3]");
    wire::Message req;
    req.tensors.push_back({"image", image});
    return call("/encode_image", std::move(req)).tensor("latent");
}

ad::Tensor RemoteClient::decode_latent(const ad::Tensor& latent) {
    wire::Message req;
    req.tensors.push_back({"latent", latent});
    return call("/decode_latent", std::move(req)).tensor("image");
}

ad::Tensor RemoteClient::predict_noise(const ad::Tensor& z_t, double t, const Embedding& embedding,
                                       const std::optional<Embedding>& negative_embedding,
                                       const std::optional<ad::Tensor>& depth, std::optional<double> omega) {
    if (config_.depth_conditioning && !depth) throw ValidationError("predict_noise: depth conditioning is on but no depth map was given");
    for (double v : z_t.data)
        if (!std::isfinite(v)) throw ValidationError("predict_noise: non-finite latent");
    wire::Message req;
    req.header["t"] = t;
    if (omega) req.header["omega"] = *omega;
    req.tensors.push_back({"z_t", z_t});
    req.tensors.push_back({"embedding", ad::Tensor({embedding.size()}, embedding)});
    if (negative_embedding)
        req.tensors.push_back({"negative_embedding", ad::Tensor({negative_embedding->size()}, *negative_embedding)});
    if (depth) req.tensors.push_back({"depth", *depth});
    auto eps = call("/predict_noise", std::move(req)).tensor("eps");
    if (eps.shape != z_t.shape)
        throw wire::ProtocolError("predict_noise: eps shape " + ad::to_string(eps.shape) + " does not match z_t", 0);
    return eps;
}

double RemoteClient::clip_score(const ad::Tensor& image, const std::string& prompt) {
    wire::Message req;
    req.header["prompt"] = prompt;
    req.tensors.push_back({"image", image});
    auto reply = call("/clip_score", std::move(req));
    if (!reply.header.contains("score") || !reply.header["score"].is_number())
        throw wire::ProtocolError("clip_score: response lacks a numeric 'score'", 0);
    return reply.header["score"].get<double>();
}

RemoteBackend::RemoteBackend(RemoteConfig config, NoiseSchedule schedule)
    : client_(std::move(config)), schedule_(std::move(schedule)) {}

ad::Tensor RemoteBackend::image_gradient(const ad::Tensor& image, const ad::Tensor& latent, const ad::Tensor& latent_grad) {
    ad::Tensor stepped = latent;
    for (std::size_t i = 0; i < stepped.size(); ++i) stepped[i] -= latent_grad[i];
    ad::Tensor decoded = client_.decode_latent(stepped);
    if (decoded.shape != image.shape) throw wire::ProtocolError("decode_latent: image shape mismatch", 0);
    ad::Tensor out = image;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = image[i] - decoded[i];
    return out;
}

ad::Tensor RemoteBackend::predict_guided(const DenoiserRequest& request, double omega) {
    return client_.predict_noise(request.latent, request.t, request.embedding, std::nullopt, request.depth, omega);
}

}  // namespace dsdtex
