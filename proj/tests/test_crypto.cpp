#include <doctest.h>

#include "peerbft/messages.hpp"
#include "testutil.hpp"

using namespace peerbft;

TEST_CASE("digest is deterministic and sensitive to single bit flips") {
    testutil::Rand rnd(99);
    for (int i = 0; i < 1000; ++i) {
        Bytes data = rnd.bytes(64);
        if (data.empty()) data.push_back(0);
        CHECK(digestOf(data) == digestOf(data));

        Bytes flipped = data;
        size_t pos = rnd.below(flipped.size());
        flipped[pos] ^= static_cast<std::uint8_t>(1u << rnd.below(8));
        CHECK(digestOf(flipped) != digestOf(data));
    }
}

TEST_CASE("signature schemes verify their own output and reject tampering") {
    for (const char* name : {"ed25519", "tag"}) {
        auto scheme = makeScheme(name);
        KeyPair kp = scheme->deriveKeyPair("unit-test-seed");
        Bytes msg = toBytes("state machine replication");
        Bytes sig = scheme->sign(kp.secretKey, msg);
        CHECK(scheme->verify(kp.publicKey, msg, sig));

        Bytes tampered = msg;
        tampered[3] ^= 0x20;
        CHECK(!scheme->verify(kp.publicKey, tampered, sig));

        KeyPair other = scheme->deriveKeyPair("different-seed");
        CHECK(!scheme->verify(other.publicKey, msg, sig));
    }
}

TEST_CASE("message signed by one replica is rejected when claimed by another") {
    Keyring r2 = testutil::ringFor(SignerId::replica(2));
    Keyring verifier = testutil::ringFor(SignerId::replica(0));

    DepCommit m;
    m.slot = SlotId{1, 5};
    m.sender_ = 2;
    m.dvSetHash = digestOf(toBytes("x"));
    signMessage(r2, m);
    CHECK(verifySignedMessage(verifier, m));

    DepCommit forged = m;
    forged.sender_ = 1;  // claim a different origin, keep replica 2's signature
    CHECK(!verifySignedMessage(verifier, forged));
}

TEST_CASE("dv set hash equals across independently collected identical sets") {
    testutil::Rand rnd(123);
    std::vector<DepVerify> a{rnd.depVerify(), rnd.depVerify()};
    sortBySender(a);
    std::vector<DepVerify> b{a[1], a[0]};
    sortBySender(b);
    CHECK(dvSetHash(a) == dvSetHash(b));
}

TEST_CASE("client request signatures") {
    Request r = testutil::signedKvWrite(1, 7, "k", "v");
    Keyring replica = testutil::ringFor(SignerId::replica(0));
    CHECK(verifyRequestSignature(replica, r));

    Request tampered = r;
    tampered.timestamp = 8;
    CHECK(!verifyRequestSignature(replica, tampered));

    CHECK(verifyRequestSignature(replica, Request::noOp()));
    CHECK(verifyRequestSignature(replica, Request::checkpointRequest()));
}
