//! Splat rendering and image metrics for evaluation and training.

pub mod camera;
pub mod metrics;
pub mod raster;
pub mod report;
pub mod sh;

pub use camera::{load_cameras, parse_cameras, save_cameras, Camera};
pub use metrics::{l1, l1_grad, mse, psnr, ssim, ssim_grad};
pub use raster::{
    project, project_frozen, rasterize, render, render_backward, render_traced, render_traced_frozen, Image,
    RenderGrad, RenderTrace, Splat,
};
pub use report::{rd_report, render_views, report_header, save_report, write_report, ReportRow};
