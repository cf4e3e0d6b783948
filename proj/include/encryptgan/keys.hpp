#pragma once

#include <filesystem>
#include <string>

#include "encryptgan/imagedata.hpp"
#include "encryptgan/networks.hpp"

namespace egan {

struct KeyPair {
    Image public_key;   // K(disguise)
    Image private_key;  // K(cover)
    std::string cover_ref;
    std::string disguise_ref;
    std::string keygen_checkpoint;  // keygen_digest of the K that produced both keys

    bool operator==(const KeyPair&) const = default;
};

KeyPair generate_key_pair(const KeyGenerator& k, const Image& cover, const Image& disguise,
                          std::string cover_ref = {}, std::string disguise_ref = {},
                          std::string keygen_checkpoint = {});

Image encrypt(const Generator& f, const CompositeImage& composite, const Image& public_key);
Image encrypt(const Generator& f, const Image& composite, const Image& public_key);
Image decrypt(const Generator& g, const Image& encrypted, const Image& private_key);

struct SignatureBundle {
    Image signature_image;
    std::string secret_ref;
};

inline constexpr double kDefaultVerifyThreshold = 14.0;

// signature = G(secret | private key)
SignatureBundle sign(const Generator& g, const Image& secret, const Image& private_key, std::string secret_ref = {});
// PSNR of F(signature | public key) against the expected secret.
double signature_psnr(const Generator& f, const SignatureBundle& bundle, const Image& public_key,
                      const Image& expected_secret);
bool verify(const Generator& f, const SignatureBundle& bundle, const Image& public_key, const Image& expected_secret,
            double threshold_db = kDefaultVerifyThreshold);

// Key files: 16-bit RGB PNG plus "<stem>.json" next to it.
enum class KeyRole { Public, Private };

struct KeyFile {
    Image key;
    KeyRole role = KeyRole::Public;
    std::string source_ref;
    std::string keygen_checkpoint;
};

void save_key(const KeyFile& key, const std::filesystem::path& png_path);
KeyFile load_key(const std::filesystem::path& png_path);
std::filesystem::path key_metadata_path(const std::filesystem::path& png_path);

// Writes public_key.png / private_key.png (+ sidecars) into `dir`.
void save_key_pair(const KeyPair& pair, const std::filesystem::path& dir);
KeyPair load_key_pair(const std::filesystem::path& dir);

}  // namespace egan
