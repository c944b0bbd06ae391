#ifndef MRF_VERSION_HPP
#define MRF_VERSION_HPP

namespace mrf {
inline constexpr const char* kVersion = "0.1.0";
}

#endif  // MRF_VERSION_HPP
