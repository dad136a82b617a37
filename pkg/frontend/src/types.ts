// Wire types of the inference service API.

export type Health = {
  status: string;
  model: string;
  k: number;
  scale: number;
  lr_size: [number, number];
  hr_size: [number, number];
};

export type GalleryIdentity = {
  identity: string;
  count: number;
  thumbnail: string;
};

export type IdentityList = { identities: GalleryIdentity[] };

export type ExemplarList = { identity: string; images: string[] };

export type EditRequestBody = {
  lr_image?: string; // base64 PNG/JPEG at the model's LR size
  hr_image?: string; // base64; service downsamples
  exemplar_refs: string[];
  return_heatmaps: boolean;
  seed: number;
};

export type Heatmaps = { scale_lr: string[]; scale_2x: string[] } | null;

export type EditResponse = {
  sr_image: string;
  sr_sha256: string;
  width: number;
  height: number;
  model: string;
  version: string;
  latency_ms: number;
  request: {
    exemplar_refs: string[];
    return_heatmaps: boolean;
    seed: number;
    scale: number;
  };
  heatmaps: Heatmaps;
};

/** One completed run retained for comparison. */
export type HistoryEntry = {
  id: number;
  exemplarRefs: string[];
  response: EditResponse;
  timestamp: number;
};
