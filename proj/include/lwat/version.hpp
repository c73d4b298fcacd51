#ifndef LWAT_VERSION_HPP
#define LWAT_VERSION_HPP

namespace lwat {
inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kTensorFormatVersion = 1;
inline constexpr int kCheckpointFormatVersion = 1;
} // namespace lwat

#endif // LWAT_VERSION_HPP
