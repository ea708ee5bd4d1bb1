use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// ESRI ASCII grid. Rows are stored top (north) first, as in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct AsciiGrid {
    pub ncols: usize,
    pub nrows: usize,
    pub xll: f64,
    pub yll: f64,
    pub cellsize: f64,
    pub nodata: Option<f64>,
    pub data: Vec<f64>,
}

impl AsciiGrid {
    pub fn new(ncols: usize, nrows: usize, xll: f64, yll: f64, cellsize: f64, data: Vec<f64>) -> Result<Self> {
        if ncols == 0 || nrows == 0 || !(cellsize > 0.0) {
            return Err(Error::invalid("raster needs ncols, nrows >= 1 and cellsize > 0"));
        }
        if data.len() != ncols * nrows {
            return Err(Error::invalid(format!(
                "raster data has {} cells, header says {}",
                data.len(),
                ncols * nrows
            )));
        }
        Ok(AsciiGrid {
            ncols,
            nrows,
            xll,
            yll,
            cellsize,
            nodata: None,
            data,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let perr = |line: usize, message: String| Error::Parse {
            path: PathBuf::from("<raster>"),
            line: line as u64,
            message,
        };
        let mut lines = text.lines().enumerate().peekable();
        let (mut ncols, mut nrows, mut cellsize, mut nodata) = (None, None, None, None);
        let (mut xll, mut yll, mut center) = (None, None, false);
        while let Some((i, line)) = lines.peek() {
            let mut parts = line.split_whitespace();
            let Some(key) = parts.next() else {
                lines.next();
                continue;
            };
            let key = key.to_ascii_lowercase();
            if key.starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '.') {
                break;
            }
            let value: f64 = parts
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| perr(i + 1, format!("bad header value for `{key}`")))?;
            match key.as_str() {
                "ncols" => ncols = Some(value as usize),
                "nrows" => nrows = Some(value as usize),
                "xllcorner" => xll = Some(value),
                "yllcorner" => yll = Some(value),
                "xllcenter" => {
                    xll = Some(value);
                    center = true;
                }
                "yllcenter" => yll = Some(value),
                "cellsize" => cellsize = Some(value),
                "nodata_value" => nodata = Some(value),
                other => return Err(perr(i + 1, format!("unknown header key `{other}`"))),
            }
            lines.next();
        }
        let missing = |k: &str| perr(0, format!("missing header key `{k}`"));
        let ncols = ncols.ok_or_else(|| missing("ncols"))?;
        let nrows = nrows.ok_or_else(|| missing("nrows"))?;
        let cellsize = cellsize.ok_or_else(|| missing("cellsize"))?;
        let (mut xll, mut yll) = (xll.ok_or_else(|| missing("xllcorner"))?, yll.ok_or_else(|| missing("yllcorner"))?);
        if center {
            xll -= cellsize / 2.0;
            yll -= cellsize / 2.0;
        }
        let mut data = Vec::with_capacity(ncols * nrows);
        for (i, line) in lines {
            for tok in line.split_whitespace() {
                data.push(tok.parse::<f64>().map_err(|_| perr(i + 1, format!("bad cell value `{tok}`")))?);
            }
        }
        let mut g = AsciiGrid::new(ncols, nrows, xll, yll, cellsize, data)?;
        g.nodata = nodata;
        Ok(g)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut out = String::with_capacity(self.data.len() * 6 + 128);
        out.push_str(&format!(
            "ncols {}\nnrows {}\nxllcorner {}\nyllcorner {}\ncellsize {}\n",
            self.ncols, self.nrows, self.xll, self.yll, self.cellsize
        ));
        if let Some(nd) = self.nodata {
            out.push_str(&format!("NODATA_value {nd}\n"));
        }
        for row in self.data.chunks(self.ncols) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn x_max(&self) -> f64 {
        self.xll + self.ncols as f64 * self.cellsize
    }

    pub fn y_max(&self) -> f64 {
        self.yll + self.nrows as f64 * self.cellsize
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.data[row * self.ncols + col];
        (Some(v) != self.nodata).then_some(v)
    }

    /// Center of cell `(row, col)`; row 0 is the northernmost.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.xll + (col as f64 + 0.5) * self.cellsize,
            self.y_max() - (row as f64 + 0.5) * self.cellsize,
        )
    }

    /// Value of the cell containing `(x, y)`.
    pub fn value_at(&self, x: f64, y: f64) -> Result<f64> {
        if x < self.xll || x >= self.x_max() || y <= self.yll || y > self.y_max() {
            return Err(Error::InsufficientData(format!("point ({x}, {y}) outside raster extent")));
        }
        let col = (((x - self.xll) / self.cellsize) as usize).min(self.ncols - 1);
        let row = (((self.y_max() - y) / self.cellsize) as usize).min(self.nrows - 1);
        self.get(row, col)
            .ok_or_else(|| Error::InsufficientData(format!("no data at ({x}, {y})")))
    }

    pub fn contains_buffer(&self, x: f64, y: f64, radius: f64) -> bool {
        x - radius >= self.xll && x + radius <= self.x_max() && y - radius >= self.yll && y + radius <= self.y_max()
    }

    /// Visits every data cell whose center lies within `radius` of `(x, y)`.
    pub fn for_each_in_buffer(&self, x: f64, y: f64, radius: f64, mut f: impl FnMut(f64)) -> Result<()> {
        if !self.contains_buffer(x, y, radius) {
            return Err(Error::InsufficientData(format!(
                "buffer of {radius} m around ({x}, {y}) exits raster extent"
            )));
        }
        let cs = self.cellsize;
        let c0 = (((x - radius - self.xll) / cs).floor().max(0.0)) as usize;
        let c1 = ((((x + radius - self.xll) / cs).ceil()) as usize).min(self.ncols);
        let r0 = (((self.y_max() - y - radius) / cs).floor().max(0.0)) as usize;
        let r1 = ((((self.y_max() - y + radius) / cs).ceil()) as usize).min(self.nrows);
        let r2 = radius * radius;
        for row in r0..r1 {
            for col in c0..c1 {
                let (cx, cy) = self.cell_center(row, col);
                let (dx, dy) = (cx - x, cy - y);
                if dx * dx + dy * dy <= r2 {
                    if let Some(v) = self.get(row, col) {
                        f(v);
                    }
                }
            }
        }
        Ok(())
    }
}

/// A set of non-overlapping raster tiles queried as one layer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RasterMosaic {
    pub tiles: Vec<AsciiGrid>,
}

impl RasterMosaic {
    pub fn single(tile: AsciiGrid) -> Self {
        RasterMosaic { tiles: vec![tile] }
    }

    /// Loads `<stem>.asc` if present, otherwise every `*.asc` in directory `<stem>/` in name order.
    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let file = dir.join(format!("{stem}.asc"));
        if file.is_file() {
            return Ok(Self::single(AsciiGrid::read(&file)?));
        }
        let sub = dir.join(stem);
        let entries = fs::read_dir(&sub).map_err(|_| {
            Error::Config(format!("{stem} raster not found: expected {} or {}/*.asc", file.display(), sub.display()))
        })?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "asc"))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(Error::Config(format!("no .asc tiles in {}", sub.display())));
        }
        Ok(RasterMosaic {
            tiles: paths.iter().map(|p| AsciiGrid::read(p)).collect::<Result<_>>()?,
        })
    }

    /// Writes tiles as `<stem>/tile_NNNN.asc`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        for (i, t) in self.tiles.iter().enumerate() {
            t.write(&dir.join(stem).join(format!("tile_{i:04}.asc")))?;
        }
        Ok(())
    }

    /// First tile whose extent holds the whole buffer.
    pub fn tile_for(&self, x: f64, y: f64, radius: f64) -> Result<&AsciiGrid> {
        self.tiles
            .iter()
            .find(|t| t.contains_buffer(x, y, radius))
            .ok_or_else(|| {
                Error::InsufficientData(format!("buffer of {radius} m around ({x}, {y}) exits raster extent"))
            })
    }
}
