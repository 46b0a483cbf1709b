#include "peerbft/crypto.hpp"

#include <sodium.h>

#include <cstdio>
#include <stdexcept>

#include "peerbft/encoding.hpp"

namespace peerbft {

namespace {

void ensureSodium() {
    static const bool ok = [] { return sodium_init() >= 0; }();
    if (!ok) throw std::runtime_error("libsodium initialization failed");
}

}  // namespace

Digest digestOf(ByteSpan data) {
    ensureSodium();
    Digest d;
    crypto_hash_sha256(d.bytes.data(), data.data(), data.size());
    return d;
}

Digest digestOf(const Bytes& data) {
    return digestOf(ByteSpan(data.data(), data.size()));
}

std::string hexString(ByteSpan b) {
    static const char* hex = "0123456789abcdef";
    std::string s;
    s.reserve(b.size() * 2);
    for (auto c : b) {
        s.push_back(hex[c >> 4]);
        s.push_back(hex[c & 0xf]);
    }
    return s;
}

std::string shortHex(const Digest& d) {
    return hexString(ByteSpan(d.bytes.data(), 4));
}

std::string slotToString(const SlotId& s) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "(%u,%llu)", s.coordinator,
                  static_cast<unsigned long long>(s.counter));
    return buf;
}

namespace {

class Ed25519Scheme final : public SignatureScheme {
  public:
    std::string name() const override { return "ed25519"; }

    KeyPair deriveKeyPair(std::string_view seed) const override {
        ensureSodium();
        Digest seedHash = digestOf(toBytes(seed));
        KeyPair kp;
        kp.publicKey.resize(crypto_sign_PUBLICKEYBYTES);
        kp.secretKey.resize(crypto_sign_SECRETKEYBYTES);
        crypto_sign_seed_keypair(kp.publicKey.data(), kp.secretKey.data(), seedHash.bytes.data());
        return kp;
    }

    Bytes sign(const Bytes& secretKey, ByteSpan message) const override {
        ensureSodium();
        Bytes sig(crypto_sign_BYTES);
        crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(),
                             secretKey.data());
        return sig;
    }

    bool verify(const Bytes& publicKey, ByteSpan message, ByteSpan signature) const override {
        ensureSodium();
        if (publicKey.size() != crypto_sign_PUBLICKEYBYTES || signature.size() != crypto_sign_BYTES)
            return false;
        return crypto_sign_verify_detached(signature.data(), message.data(), message.size(),
                                           publicKey.data()) == 0;
    }
};

// Deterministic keyed tag: sig = sha256(secret || sha256(message)). Not a real
// signature scheme; adequate for simulations where the adversary only mutates
// its own messages.
class TagScheme final : public SignatureScheme {
  public:
    std::string name() const override { return "tag"; }

    KeyPair deriveKeyPair(std::string_view seed) const override {
        Bytes material = toBytes(std::string("tag-key:") + std::string(seed));
        Digest secret = digestOf(material);
        KeyPair kp;
        kp.secretKey.assign(secret.bytes.begin(), secret.bytes.end());
        kp.publicKey = kp.secretKey;
        return kp;
    }

    Bytes sign(const Bytes& secretKey, ByteSpan message) const override {
        Digest inner = digestOf(message);
        Bytes buf = secretKey;
        buf.insert(buf.end(), inner.bytes.begin(), inner.bytes.end());
        Digest tag = digestOf(buf);
        return Bytes(tag.bytes.begin(), tag.bytes.end());
    }

    bool verify(const Bytes& publicKey, ByteSpan message, ByteSpan signature) const override {
        Bytes expected = sign(publicKey, message);
        return signature.size() == expected.size() &&
               std::equal(signature.begin(), signature.end(), expected.begin());
    }
};

}  // namespace

std::unique_ptr<SignatureScheme> makeEd25519Scheme() {
    return std::make_unique<Ed25519Scheme>();
}

std::unique_ptr<SignatureScheme> makeTagScheme() {
    return std::make_unique<TagScheme>();
}

std::unique_ptr<SignatureScheme> makeScheme(const std::string& name) {
    if (name == "ed25519") return makeEd25519Scheme();
    if (name == "tag") return makeTagScheme();
    throw std::runtime_error("unknown signature scheme: " + name);
}

std::string simKeySeed(SignerId who) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%s:%llu",
                  who.kind == SignerId::Kind::Replica ? "replica" : "client",
                  static_cast<unsigned long long>(who.id));
    return buf;
}

Keyring Keyring::forSimulation(std::shared_ptr<const SignatureScheme> scheme, SignerId own,
                               std::uint32_t replicaCount, const std::vector<ClientId>& clients) {
    Keyring ring(scheme);
    for (ReplicaId r = 0; r < replicaCount; ++r) {
        SignerId id = SignerId::replica(r);
        ring.addPublicKey(id, scheme->deriveKeyPair(simKeySeed(id)).publicKey);
    }
    for (ClientId c : clients) {
        SignerId id = SignerId::client(c);
        ring.addPublicKey(id, scheme->deriveKeyPair(simKeySeed(id)).publicKey);
    }
    ring.own_ = own;
    ring.ownKeys_ = scheme->deriveKeyPair(simKeySeed(own));
    ring.publicKeys_[own] = ring.ownKeys_.publicKey;
    return ring;
}

}  // namespace peerbft
