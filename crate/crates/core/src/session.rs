//! Editing sessions for the interactive service.
//!
//! A session owns one basis set, an editable AO map, and optional
//! background and cutout layers. Bases for uploaded meshes are built on a
//! background thread and published once; until then compose requests are
//! refused. Requests against one session are serialized by its lock, while
//! distinct sessions proceed independently.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock, RwLock};
use std::time::{Duration, Instant};

use image::RgbaImage;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::ao::{apply_strokes, compute_ao, AoOptions, AoStroke};
use crate::bases::{build_bases_with_progress, total_irradiance, ShadowBasisSet, ShadowDomain, ShadowMap, GRID_COLS, GRID_ROWS};
use crate::composite::{composite, decode_rgba, encode_rgba, Cutout, Placement};
use crate::elm::EnvLightMap;
use crate::error::Error;
use crate::image::ImageBuffer;
use crate::mesh::parse_obj;
use crate::scene::{CameraPose, View};

pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(30 * 60);
pub const DEFAULT_SESSION_AO_SPP: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("no session `{0}`")]
    NotFound(String),
    #[error("session is not ready ({0}); retry later")]
    NotReady(String),
    #[error("session build failed: {0}")]
    Failed(String),
    #[error("missing layer: {0}")]
    MissingLayer(&'static str),
    #[error("{0}")]
    BadRequest(#[from] Error),
}

pub type ServiceResult<T> = std::result::Result<T, ServiceError>;

/// What a session is created from.
#[derive(Clone, Debug)]
pub enum SessionSource {
    Mesh {
        obj: String,
        pose: CameraPose,
        ao_spp: usize,
    },
    Prebuilt {
        ssbb: Vec<u8>,
        /// Cutout mask PNG.
        mask: Option<Vec<u8>>,
        /// Receiver PNG; all pixels count as receiver without it.
        receiver: Option<Vec<u8>>,
        /// AO PFM; all-ones without it.
        ao: Option<Vec<u8>>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuildState {
    Building,
    Ready,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub id: String,
    pub state: BuildState,
    /// Fraction of the basis set built, in `[0, 1]`.
    pub progress: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub width: usize,
    pub height: usize,
}

/// Immutable output of the build step.
#[derive(Debug)]
pub struct Built {
    pub bases: ShadowBasisSet,
    pub mask: ImageBuffer,
    pub ao: ImageBuffer,
}

#[derive(Default)]
struct Layers {
    elm: Option<EnvLightMap>,
    shadow: Option<ShadowMap>,
    /// Editable copy of the built AO.
    ao: Option<ImageBuffer>,
    background: Option<RgbaImage>,
    cutout: Option<Cutout>,
    /// Running maximum of composed shadows, for previews.
    preview_peak: f32,
}

pub struct Session {
    id: String,
    size: (usize, usize),
    built: OnceLock<Built>,
    failure: OnceLock<String>,
    progress: AtomicUsize,
    layers: Mutex<Layers>,
    last_access: Mutex<Instant>,
}

#[derive(Clone, Debug)]
pub struct ComposeResult {
    pub shadow: ShadowMap,
    pub compose_ms: f64,
}

/// Everything a session would contribute to a dataset export.
#[derive(Clone, Debug)]
pub struct SessionExport {
    pub mask_png: Vec<u8>,
    pub receiver_png: Vec<u8>,
    pub ao_pfm: Vec<u8>,
    pub bases_ssbb: Vec<u8>,
    pub elm: Option<EnvLightMap>,
    pub shadow_pfm: Option<Vec<u8>>,
}

impl Session {
    pub fn id(&self) -> &str {
        &self.id
    }

    fn touch(&self) {
        *self.last_access.lock().unwrap() = Instant::now();
    }

    pub fn status(&self) -> SessionStatus {
        let total = GRID_ROWS * GRID_COLS;
        let (state, progress, error) = if self.built.get().is_some() {
            (BuildState::Ready, 1.0, None)
        } else if let Some(e) = self.failure.get() {
            (BuildState::Failed, self.progress.load(Ordering::Relaxed) as f64 / total as f64, Some(e.clone()))
        } else {
            (BuildState::Building, self.progress.load(Ordering::Relaxed) as f64 / total as f64, None)
        };
        SessionStatus {
            id: self.id.clone(),
            state,
            progress,
            error,
            width: self.size.0,
            height: self.size.1,
        }
    }

    /// The published build output, or the reason there is none yet.
    pub fn built(&self) -> ServiceResult<&Built> {
        if let Some(b) = self.built.get() {
            return Ok(b);
        }
        if let Some(e) = self.failure.get() {
            return Err(ServiceError::Failed(e.clone()));
        }
        let pct = 100.0 * self.progress.load(Ordering::Relaxed) as f64 / (GRID_ROWS * GRID_COLS) as f64;
        Err(ServiceError::NotReady(format!("building, {pct:.0}% done")))
    }

    fn publish(&self, built: Built) {
        self.layers.lock().unwrap().ao = Some(built.ao.clone());
        let _ = self.built.set(built);
    }

    pub fn set_elm(&self, elm: EnvLightMap) -> ServiceResult<ComposeResult> {
        let built = self.built()?;
        elm.validate()?;
        let mut layers = self.layers.lock().unwrap();
        let start = Instant::now();
        let shadow = built.bases.compose((&elm).into())?;
        let compose_ms = start.elapsed().as_secs_f64() * 1e3;
        layers.preview_peak = layers.preview_peak.max(shadow.pixels.max().unwrap_or(0.0));
        layers.elm = Some(elm);
        layers.shadow = Some(shadow.clone());
        Ok(ComposeResult { shadow, compose_ms })
    }

    /// Last composed shadow in the requested domain.
    pub fn shadow(&self, domain: ShadowDomain) -> ServiceResult<ShadowMap> {
        self.built()?;
        let layers = self.layers.lock().unwrap();
        let shadow = layers.shadow.as_ref().ok_or(ServiceError::MissingLayer("shadow"))?;
        match domain {
            ShadowDomain::Inverse => Ok(shadow.clone()),
            ShadowDomain::Radiance => {
                let elm = layers.elm.as_ref().expect("shadow implies light map");
                Ok(shadow.to_radiance((elm).into())?)
            }
        }
    }

    /// 8-bit preview of the last shadow, scaled by the largest value this
    /// session has composed so far.
    pub fn shadow_preview_png(&self, domain: ShadowDomain) -> ServiceResult<Vec<u8>> {
        let shadow = self.shadow(domain)?;
        let peak = match domain {
            ShadowDomain::Inverse => self.layers.lock().unwrap().preview_peak,
            ShadowDomain::Radiance => shadow.pixels.max().unwrap_or(0.0),
        };
        let img = if peak > 0.0 {
            shadow.pixels.scaled(1.0 / peak)
        } else {
            shadow.pixels.clone()
        };
        Ok(img.encode_png()?)
    }

    pub fn ao(&self) -> ServiceResult<ImageBuffer> {
        self.built()?;
        Ok(self.layers.lock().unwrap().ao.clone().expect("published with AO"))
    }

    /// Applies brush strokes to the editable AO. The basis set is never
    /// touched.
    pub fn edit_ao(&self, strokes: &[AoStroke]) -> ServiceResult<ImageBuffer> {
        self.built()?;
        let mut layers = self.layers.lock().unwrap();
        let ao = layers.ao.as_mut().expect("published with AO");
        apply_strokes(ao, strokes)?;
        Ok(ao.clone())
    }

    pub fn set_background(&self, png: &[u8]) -> ServiceResult<(u32, u32)> {
        let img = decode_rgba(png)?;
        let dims = img.dimensions();
        self.layers.lock().unwrap().background = Some(img);
        Ok(dims)
    }

    pub fn set_cutout(&self, png: &[u8], placement: Placement) -> ServiceResult<(u32, u32)> {
        if !(placement.scale > 0.0) || !placement.scale.is_finite() {
            return Err(Error::InvalidParameter(format!("cutout scale must be positive, got {}", placement.scale)).into());
        }
        let image = decode_rgba(png)?;
        let dims = image.dimensions();
        self.layers.lock().unwrap().cutout = Some(Cutout { image, placement });
        Ok(dims)
    }

    pub fn composite_png(&self) -> ServiceResult<Vec<u8>> {
        self.built()?;
        let layers = self.layers.lock().unwrap();
        let background = layers.background.as_ref().ok_or(ServiceError::MissingLayer("background"))?;
        let cutout = layers.cutout.as_ref().ok_or(ServiceError::MissingLayer("cutout"))?;
        let shadow = layers.shadow.as_ref().ok_or(ServiceError::MissingLayer("shadow"))?;
        let elm = layers.elm.as_ref().expect("shadow implies light map");
        let total = total_irradiance(elm.into())?;
        let radiance = shadow.to_radiance_with_total(total);
        Ok(encode_rgba(&composite(background, &radiance, total, cutout)?)?)
    }

    pub fn export(&self) -> ServiceResult<SessionExport> {
        let built = self.built()?;
        let layers = self.layers.lock().unwrap();
        let receiver = match built.bases.receiver() {
            Some(r) => (**r).clone(),
            None => ImageBuffer::filled(self.size.0, self.size.1, 1.0),
        };
        Ok(SessionExport {
            mask_png: built.mask.encode_png()?,
            receiver_png: receiver.encode_png()?,
            ao_pfm: layers.ao.as_ref().expect("published with AO").encode_pfm(),
            bases_ssbb: built.bases.encode()?,
            elm: layers.elm.clone(),
            shadow_pfm: layers.shadow.as_ref().map(|s| s.pixels.encode_pfm()),
        })
    }
}

pub struct SessionManager {
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    idle_timeout: Duration,
    data_dir: Option<PathBuf>,
}

impl Default for SessionManager {
    fn default() -> Self {
        SessionManager::new(DEFAULT_IDLE_TIMEOUT, None)
    }
}

fn new_id() -> String {
    let mut bytes = [0u8; 16];
    rand::rng().fill_bytes(&mut bytes);
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl SessionManager {
    /// `data_dir`, when set, receives a `<id>.ssbb` copy of every built
    /// basis set.
    pub fn new(idle_timeout: Duration, data_dir: Option<PathBuf>) -> Self {
        SessionManager {
            sessions: RwLock::new(HashMap::new()),
            idle_timeout,
            data_dir,
        }
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops sessions idle for longer than the timeout. Sessions still
    /// building are kept.
    pub fn sweep(&self) -> usize {
        let now = Instant::now();
        let mut map = self.sessions.write().unwrap();
        let before = map.len();
        map.retain(|_, s| {
            let building = s.built.get().is_none() && s.failure.get().is_none();
            building || now.duration_since(*s.last_access.lock().unwrap()) <= self.idle_timeout
        });
        before - map.len()
    }

    pub fn get(&self, id: &str) -> ServiceResult<Arc<Session>> {
        self.sweep();
        let s = self
            .sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))?;
        s.touch();
        Ok(s)
    }

    pub fn remove(&self, id: &str) -> bool {
        self.sessions.write().unwrap().remove(id).is_some()
    }

    /// Validates the upload and returns the new session id at once. Mesh
    /// uploads are built on a background thread.
    pub fn create(&self, source: SessionSource) -> ServiceResult<Arc<Session>> {
        self.sweep();
        let id = new_id();
        let session = match source {
            SessionSource::Mesh { obj, pose, ao_spp } => {
                let mesh = parse_obj(&obj)?.normalized()?;
                if pose.width == 0 || pose.height == 0 || pose.width > u16::MAX as usize || pose.height > u16::MAX as usize {
                    return Err(Error::InvalidParameter(format!("image size {}x{}", pose.width, pose.height)).into());
                }
                if ao_spp == 0 {
                    return Err(Error::InvalidParameter("ao_spp must be at least 1".into()).into());
                }
                let session = Arc::new(self.empty_session(id.clone(), pose.image_size()));
                let worker = session.clone();
                let data_dir = self.data_dir.clone();
                std::thread::Builder::new()
                    .name(format!("build-{id}"))
                    .spawn(move || {
                        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                            let view = View::new(&mesh, pose);
                            let bases = build_bases_with_progress(&view, &|done, _| {
                                worker.progress.store(done, Ordering::Relaxed);
                            });
                            let ao = compute_ao(&view, &AoOptions::with_spp(ao_spp))?;
                            if let Some(dir) = &data_dir {
                                bases.write(dir.join(format!("{}.ssbb", worker.id)))?;
                            }
                            Ok::<_, Error>(Built {
                                bases,
                                mask: view.mask.clone(),
                                ao: ao.pixels,
                            })
                        }));
                        match outcome {
                            Ok(Ok(built)) => worker.publish(built),
                            Ok(Err(e)) => {
                                let _ = worker.failure.set(e.to_string());
                            }
                            Err(_) => {
                                let _ = worker.failure.set("basis build panicked".into());
                            }
                        }
                    })
                    .expect("spawn build thread");
                session
            }
            SessionSource::Prebuilt { ssbb, mask, receiver, ao } => {
                let mut bases = ShadowBasisSet::decode(&ssbb)?;
                let size = bases.image_size();
                let check = |img: ImageBuffer| -> ServiceResult<ImageBuffer> {
                    if img.dims() != size {
                        return Err(Error::DimensionMismatch(img.width(), img.height(), size.0, size.1).into());
                    }
                    Ok(img)
                };
                if let Some(r) = receiver {
                    bases.set_receiver(Some(check(ImageBuffer::decode_png(&r)?)?))?;
                }
                let mask = match mask {
                    Some(m) => check(ImageBuffer::decode_png(&m)?)?,
                    None => ImageBuffer::new(size.0, size.1),
                };
                let ao = match ao {
                    Some(a) => check(ImageBuffer::decode_pfm(&a)?)?,
                    None => ImageBuffer::filled(size.0, size.1, 1.0),
                };
                if let Some(dir) = &self.data_dir {
                    bases.write(dir.join(format!("{id}.ssbb")))?;
                }
                let session = Arc::new(self.empty_session(id.clone(), size));
                session.progress.store(GRID_ROWS * GRID_COLS, Ordering::Relaxed);
                session.publish(Built { bases, mask, ao });
                session
            }
        };
        self.sessions.write().unwrap().insert(id, session.clone());
        Ok(session)
    }

    fn empty_session(&self, id: String, size: (usize, usize)) -> Session {
        Session {
            id,
            size,
            built: OnceLock::new(),
            failure: OnceLock::new(),
            progress: AtomicUsize::new(0),
            layers: Mutex::new(Layers::default()),
            last_access: Mutex::new(Instant::now()),
        }
    }
}
