#pragma once

#include <stdexcept>
#include <string>

namespace xrx {

// All recoverable failures are reported as typed exceptions so callers can
// distinguish validation problems from runtime ones at the CLI boundary.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeMismatch : Error { using Error::Error; };
struct StaleCache : Error { using Error::Error; };
struct DegenerateProbability : Error { using Error::Error; };

struct EmptyImage : Error { using Error::Error; };
struct InvalidConfig : Error { using Error::Error; };
struct RegimeError : Error { using Error::Error; };
struct ZeroStd : Error { using Error::Error; };

struct OutOfRange : Error { using Error::Error; };
struct EmptyClass : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };

struct DegenerateMatrix : Error { using Error::Error; };
struct DegenerateSpectrum : Error { using Error::Error; };
struct TooFewSamples : Error { using Error::Error; };
struct KTooLarge : Error { using Error::Error; };

struct EmptyEnsemble : Error { using Error::Error; };

struct ArchitectureUnsupported : Error { using Error::Error; };
struct LayerNotConv : Error { using Error::Error; };
struct UnsupportedLayer : Error { using Error::Error; };
struct DimMismatch : Error { using Error::Error; };

struct LengthMismatch : Error { using Error::Error; };
struct IdOutOfRange : Error { using Error::Error; };
struct EmptyClassRow : Error { using Error::Error; };
struct SingleClassOnly : Error { using Error::Error; };
struct ClassTooSmall : Error { using Error::Error; };

struct ParseError : Error { using Error::Error; };
struct DuplicatePath : Error { using Error::Error; };
struct EmptyManifest : Error { using Error::Error; };
struct BadMagic : Error { using Error::Error; };
struct VersionUnsupported : Error { using Error::Error; };
struct TruncatedBlob : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

}  // namespace xrx
