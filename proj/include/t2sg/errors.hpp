#pragma once

#include <stdexcept>
#include <string>

namespace t2sg {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// graph-core
struct MalformedDocument : Error { using Error::Error; };
struct DanglingEdge : Error { using Error::Error; };
struct InvalidThreshold : Error { using Error::Error; };

// vocab-embed
struct MalformedVectorFile : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };

// text-extract
struct EndpointUnavailable : Error { using Error::Error; };
struct UnparsableResponse : Error { using Error::Error; };
struct EmptyGraph : Error { using Error::Error; };

// neural-net / persistence
struct MalformedCheckpoint : Error { using Error::Error; };

// trainer
struct InsufficientScenes : Error { using Error::Error; };
struct DivergedLoss : Error { using Error::Error; };

// retrieval-eval
struct DuplicateSceneId : Error { using Error::Error; };
struct UnknownSceneId : Error { using Error::Error; };
struct EmptyQuerySet : Error { using Error::Error; };
struct MalformedStore : Error { using Error::Error; };

// synth-data
struct PlacementFailure : Error { using Error::Error; };

struct IoError : Error { using Error::Error; };
struct InvalidArgument : Error { using Error::Error; };

}  // namespace t2sg
