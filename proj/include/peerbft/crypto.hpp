#pragma once

#include <map>
#include <memory>
#include <string>

#include "peerbft/types.hpp"

namespace peerbft {

Digest digestOf(ByteSpan data);
Digest digestOf(const Bytes& data);

// Identity of a signer. Replicas and clients live in separate key spaces.
struct SignerId {
    enum class Kind : std::uint8_t { Replica = 0, Client = 1 };
    Kind kind = Kind::Replica;
    std::uint64_t id = 0;

    auto operator<=>(const SignerId&) const = default;

    static SignerId replica(ReplicaId r) { return {Kind::Replica, r}; }
    static SignerId client(ClientId c) { return {Kind::Client, c}; }
};

struct KeyPair {
    Bytes publicKey;
    Bytes secretKey;
};

// Pluggable signature scheme. The real scheme is Ed25519; simulations may use
// a deterministic keyed tag instead.
class SignatureScheme {
  public:
    virtual ~SignatureScheme() = default;
    virtual std::string name() const = 0;
    virtual KeyPair deriveKeyPair(std::string_view seed) const = 0;
    virtual Bytes sign(const Bytes& secretKey, ByteSpan message) const = 0;
    virtual bool verify(const Bytes& publicKey, ByteSpan message, ByteSpan signature) const = 0;
};

std::unique_ptr<SignatureScheme> makeEd25519Scheme();
std::unique_ptr<SignatureScheme> makeTagScheme();
std::unique_ptr<SignatureScheme> makeScheme(const std::string& name);

// Public keys of every replica and client, plus this node's own secret.
class Keyring {
  public:
    Keyring() = default;
    Keyring(std::shared_ptr<const SignatureScheme> scheme) : scheme_(std::move(scheme)) {}

    void addPublicKey(SignerId who, Bytes publicKey) { publicKeys_[who] = std::move(publicKey); }
    void setOwn(SignerId who, KeyPair keys) {
        own_ = who;
        ownKeys_ = keys;
        publicKeys_[who] = keys.publicKey;
    }

    Bytes sign(ByteSpan message) const { return scheme_->sign(ownKeys_.secretKey, message); }

    bool verify(SignerId who, ByteSpan message, ByteSpan signature) const {
        auto it = publicKeys_.find(who);
        if (it == publicKeys_.end()) return false;
        return scheme_->verify(it->second, message, signature);
    }

    const SignatureScheme& scheme() const { return *scheme_; }
    SignerId own() const { return own_; }

    // Deterministic per-identity keys for tests and simulations.
    static Keyring forSimulation(std::shared_ptr<const SignatureScheme> scheme, SignerId own,
                                 std::uint32_t replicaCount, const std::vector<ClientId>& clients);

  private:
    std::shared_ptr<const SignatureScheme> scheme_;
    SignerId own_{};
    KeyPair ownKeys_;
    std::map<SignerId, Bytes> publicKeys_;
};

std::string simKeySeed(SignerId who);

}  // namespace peerbft
